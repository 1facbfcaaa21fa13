#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "resicap/codec.hpp"

namespace resicap::data {

// --- vocabulary -------------------------------------------------------------

inline constexpr int kBosId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kUnkId = 2;
inline constexpr int kPadId = 3;
inline constexpr const char* kBosToken = "<BOS>";
inline constexpr const char* kEosToken = "<EOS>";
inline constexpr const char* kUnkToken = "<UNK>";
inline constexpr const char* kPadToken = "<PAD>";

struct Vocabulary {
  std::vector<std::string> tokens;  // id -> token; specials at ids 0..3
  std::unordered_map<std::string, int> index;
  int min_count = 1;

  int size() const { return static_cast<int>(tokens.size()); }
  // UNK for unknown tokens.
  int id(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? kUnkId : it->second;
  }
  const std::string& token(int id) const;
};

// Lowercase, split on whitespace, strip trailing punctuation.
std::vector<std::string> tokenize(const std::string& text);

// Frequency filter with deterministic id order: count desc, then token asc.
Vocabulary build_vocabulary(const std::vector<std::string>& captions, int min_count);

void save_vocabulary(const std::string& path, const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::string& path);

struct CaptionRecord {
  std::string video_id;
  std::string raw_text;
  std::vector<int> token_ids;
};

// [BOS] + token ids (+[EOS]), truncated to max_len total.
std::vector<int> encode_caption(const std::string& text, const Vocabulary& vocab, int max_len);
// Inverse for generated sequences: skips BOS/PAD, stops at EOS.
std::string decode_tokens(const std::vector<int>& ids, const Vocabulary& vocab);

// --- synthetic scenes -------------------------------------------------------

enum class Shape { square, circle, triangle };
enum class Color { red, green, blue };
enum class Motion { left, right, up, down, still };

const char* to_string(Shape s);
const char* to_string(Color c);
const char* to_string(Motion m);
Shape shape_from_string(const std::string& s);
Color color_from_string(const std::string& s);
Motion motion_from_string(const std::string& s);

struct SceneSpec {
  Shape shape = Shape::square;
  Color color = Color::red;
  Motion motion = Motion::still;
  int speed = 0;  // pixels per frame; 0 iff still
  int size = 10;  // object extent in pixels
  int x0 = 0;     // top-left of the object bounding box in frame 0
  int y0 = 0;
};

struct GeneratedScene {
  codec::RawVideo video;
  std::vector<std::string> captions;
};

// Object bounding box (y_lo, x_lo, y_hi_excl, x_hi_excl) at a given frame.
struct Box {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;
};
Box object_box(const SceneSpec& spec, int frame);

// The three caption paraphrases for a scene, in template order.
std::vector<std::string> caption_templates(const SceneSpec& spec);

// Renders the object over a static per-pixel-noise background and draws 2-3
// caption paraphrases. Deterministic given the rng state.
GeneratedScene generate_scene(const SceneSpec& spec, int frames, int height, int width,
                              std::mt19937_64& rng);

// Draws a SceneSpec whose trajectory stays inside (height,width) over
// `frames` frames.
SceneSpec sample_scene_spec(int frames, int height, int width, std::mt19937_64& rng);

// Stable per-item seed derivation for corpus generation.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

// --- manifests and corpus ---------------------------------------------------

struct ManifestEntry {
  std::string video_id;
  std::string stream_path;  // relative to the manifest's directory
  std::string caption;
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

struct CorpusParams {
  int train_videos = 500;
  int test_videos = 100;
  int frames = 16;
  int height = 56;
  int width = 56;
  int gop_size = 8;
  int block_size = 8;
  int search_range = 4;
  std::uint64_t seed = 1;
};

// Validates feasibility up front (no partial output on bad params), then
// writes streams/, train.manifest, test.manifest and scenes.tsv under out_dir.
void generate_corpus(const CorpusParams& params, const std::string& out_dir);

}  // namespace resicap::data
