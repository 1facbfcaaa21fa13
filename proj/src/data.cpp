#include "resicap/data.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "resicap/tensor.hpp"

namespace resicap::data {

namespace fs = std::filesystem;

// --- vocabulary -------------------------------------------------------------

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw InputError("token id out of range: " + std::to_string(id));
  return tokens[static_cast<std::size_t>(id)];
}

std::vector<std::string> tokenize(const std::string& text) {
  static const std::string kTrailing = ".,;:!?";
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && kTrailing.find(cur.back()) != std::string::npos) cur.pop_back();
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  flush();
  return out;
}

Vocabulary build_vocabulary(const std::vector<std::string>& captions, int min_count) {
  if (min_count < 1) throw ConfigError("build_vocabulary: min_count must be >= 1");
  if (captions.empty()) throw InputError("build_vocabulary: empty caption corpus");

  std::map<std::string, long> counts;
  for (const auto& caption : captions) {
    for (const auto& tok : tokenize(caption)) ++counts[tok];
  }
  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.min_count = min_count;
  v.tokens = {kBosToken, kEosToken, kUnkToken, kPadToken};
  for (auto& [tok, n] : kept) v.tokens.push_back(tok);
  for (int i = 0; i < v.size(); ++i) v.index[v.tokens[static_cast<std::size_t>(i)]] = i;
  return v;
}

void save_vocabulary(const std::string& path, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path);
  for (const auto& tok : vocab.tokens) out << tok << "\n";
  if (!out) throw InputError("write failed: " + path);
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open: " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.tokens.push_back(line);
  }
  if (v.size() < 4 || v.tokens[0] != kBosToken || v.tokens[1] != kEosToken ||
      v.tokens[2] != kUnkToken || v.tokens[3] != kPadToken) {
    throw FormatError(path + ": vocabulary must start with the four special tokens");
  }
  for (int i = 0; i < v.size(); ++i) {
    const auto& tok = v.tokens[static_cast<std::size_t>(i)];
    if (tok.empty()) throw FormatError(path + ": empty token at id " + std::to_string(i));
    if (!v.index.emplace(tok, i).second) {
      throw FormatError(path + ": duplicate token '" + tok + "'");
    }
  }
  return v;
}

std::vector<int> encode_caption(const std::string& text, const Vocabulary& vocab, int max_len) {
  if (max_len < 1) throw ConfigError("encode_caption: max_len must be >= 1");
  std::vector<int> ids{kBosId};
  for (const auto& tok : tokenize(text)) ids.push_back(vocab.id(tok));
  ids.push_back(kEosId);
  if (static_cast<int>(ids.size()) > max_len) ids.resize(static_cast<std::size_t>(max_len));
  return ids;
}

std::string decode_tokens(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (int id : ids) {
    if (id == kEosId) break;
    if (id == kBosId || id == kPadId) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

// --- scenes -----------------------------------------------------------------

const char* to_string(Shape s) {
  switch (s) {
    case Shape::square: return "square";
    case Shape::circle: return "circle";
    case Shape::triangle: return "triangle";
  }
  throw UsageError("bad Shape enum value");
}

const char* to_string(Color c) {
  switch (c) {
    case Color::red: return "red";
    case Color::green: return "green";
    case Color::blue: return "blue";
  }
  throw UsageError("bad Color enum value");
}

const char* to_string(Motion m) {
  switch (m) {
    case Motion::left: return "left";
    case Motion::right: return "right";
    case Motion::up: return "up";
    case Motion::down: return "down";
    case Motion::still: return "still";
  }
  throw UsageError("bad Motion enum value");
}

Shape shape_from_string(const std::string& s) {
  if (s == "square") return Shape::square;
  if (s == "circle") return Shape::circle;
  if (s == "triangle") return Shape::triangle;
  throw InputError("unknown shape: " + s);
}

Color color_from_string(const std::string& s) {
  if (s == "red") return Color::red;
  if (s == "green") return Color::green;
  if (s == "blue") return Color::blue;
  throw InputError("unknown color: " + s);
}

Motion motion_from_string(const std::string& s) {
  if (s == "left") return Motion::left;
  if (s == "right") return Motion::right;
  if (s == "up") return Motion::up;
  if (s == "down") return Motion::down;
  if (s == "still") return Motion::still;
  throw InputError("unknown motion: " + s);
}

Box object_box(const SceneSpec& spec, int frame) {
  int x = spec.x0, y = spec.y0;
  switch (spec.motion) {
    case Motion::left: x -= spec.speed * frame; break;
    case Motion::right: x += spec.speed * frame; break;
    case Motion::up: y -= spec.speed * frame; break;
    case Motion::down: y += spec.speed * frame; break;
    case Motion::still: break;
  }
  return {y, x, y + spec.size, x + spec.size};
}

std::vector<std::string> caption_templates(const SceneSpec& spec) {
  const std::string color = to_string(spec.color);
  const std::string shape = to_string(spec.shape);
  const std::string cs = color + " " + shape;
  if (spec.motion == Motion::still) {
    return {"a " + cs + " stays still", "the " + cs + " is not moving",
            "a " + cs + " remains still"};
  }
  const std::string dir = to_string(spec.motion);
  const std::string phrase = (spec.motion == Motion::left)    ? "to the left"
                             : (spec.motion == Motion::right) ? "to the right"
                                                              : dir;
  return {"a " + cs + " moves " + dir, "the " + cs + " is moving " + phrase,
          "a " + cs + " slides " + dir};
}

namespace {

void object_rgb(Color c, int out[3]) {
  switch (c) {
    case Color::red: out[0] = 220; out[1] = 40; out[2] = 40; return;
    case Color::green: out[0] = 40; out[1] = 220; out[2] = 40; return;
    case Color::blue: out[0] = 40; out[1] = 40; out[2] = 220; return;
  }
  throw UsageError("bad Color enum value");
}

bool inside_shape(const SceneSpec& spec, const Box& box, int y, int x) {
  if (y < box.y0 || y >= box.y1 || x < box.x0 || x >= box.x1) return false;
  switch (spec.shape) {
    case Shape::square:
      return true;
    case Shape::circle: {
      const double cy = box.y0 + (spec.size - 1) / 2.0;
      const double cx = box.x0 + (spec.size - 1) / 2.0;
      const double r = spec.size / 2.0;
      const double dy = y - cy, dx = x - cx;
      return dy * dy + dx * dx <= r * r;
    }
    case Shape::triangle: {
      // Upward-pointing: row t of [0,size) spans a centered band of width t+1.
      const int t = y - box.y0;
      const int lo = box.x0 + (spec.size - 1 - t) / 2;
      const int hi = box.x0 + (spec.size - 1 + t) / 2;
      return x >= lo && x <= hi;
    }
  }
  return false;
}

void validate_spec(const SceneSpec& spec, int frames, int height, int width) {
  if (frames < 1) throw InputError("generate_scene: frames must be >= 1");
  if (spec.size < 3) throw InputError("generate_scene: object size must be >= 3");
  if (spec.motion == Motion::still) {
    if (spec.speed != 0) throw InputError("generate_scene: still scenes require speed 0");
  } else if (spec.speed < 1) {
    throw InputError("generate_scene: moving scenes require speed >= 1");
  }
  for (int f : {0, frames - 1}) {
    const Box b = object_box(spec, f);
    if (b.y0 < 0 || b.x0 < 0 || b.y1 > height || b.x1 > width) {
      throw InputError("generate_scene: object leaves the frame at frame " + std::to_string(f));
    }
  }
}

}  // namespace

GeneratedScene generate_scene(const SceneSpec& spec, int frames, int height, int width,
                              std::mt19937_64& rng) {
  validate_spec(spec, frames, height, width);

  GeneratedScene scene;
  // Captions first: two or three paraphrases, drawn without replacement.
  const auto templates = caption_templates(spec);
  const int count = 2 + static_cast<int>(rand_index(rng, 2));
  std::vector<int> order{0, 1, 2};
  for (int i = 2; i > 0; --i) {
    std::swap(order[static_cast<std::size_t>(i)],
              order[rand_index(rng, static_cast<std::uint64_t>(i) + 1)]);
  }
  order.resize(static_cast<std::size_t>(count));
  std::sort(order.begin(), order.end());
  for (int t : order) scene.captions.push_back(templates[static_cast<std::size_t>(t)]);

  // Static noise background shared by all frames.
  const std::size_t frame_len = static_cast<std::size_t>(height) * width * 3;
  std::vector<double> background(frame_len);
  for (double& p : background) {
    p = codec::u8_to_unit(10 + static_cast<int>(rand_index(rng, 61)));
  }
  int rgb[3];
  object_rgb(spec.color, rgb);

  auto& video = scene.video;
  video.height = height;
  video.width = width;
  video.channels = 3;
  video.frame_rate = 8.0;
  for (int f = 0; f < frames; ++f) {
    std::vector<double> frame = background;
    const Box box = object_box(spec, f);
    for (int y = box.y0; y < box.y1; ++y) {
      for (int x = box.x0; x < box.x1; ++x) {
        if (!inside_shape(spec, box, y, x)) continue;
        const std::size_t off = (static_cast<std::size_t>(y) * width + x) * 3;
        for (int c = 0; c < 3; ++c) frame[off + c] = codec::u8_to_unit(rgb[c]);
      }
    }
    video.frames.push_back(std::move(frame));
  }
  return scene;
}

namespace {

// Largest object size whose slowest trajectory still fits; <10 means the
// frame is too small for the sampler's [10,14] size range.
int max_object_size(int frames, int height, int width) {
  const int margin = 1;
  return std::min(height, width) - 2 * margin - (frames - 1);
}

}  // namespace

SceneSpec sample_scene_spec(int frames, int height, int width, std::mt19937_64& rng) {
  const int margin = 1;
  const int size_hi = std::min(14, max_object_size(frames, height, width));
  if (size_hi < 10) {
    throw ConfigError("sample_scene_spec: frame " + std::to_string(height) + "x" +
                      std::to_string(width) + " too small for " + std::to_string(frames) +
                      " frames of motion");
  }

  SceneSpec spec;
  spec.shape = static_cast<Shape>(rand_index(rng, 3));
  spec.color = static_cast<Color>(rand_index(rng, 3));
  spec.motion = static_cast<Motion>(rand_index(rng, 5));
  spec.size = 10 + static_cast<int>(rand_index(rng, static_cast<std::uint64_t>(size_hi - 10) + 1));

  const bool vertical = spec.motion == Motion::up || spec.motion == Motion::down;
  const int travel_dim = vertical ? height : width;
  if (spec.motion == Motion::still) {
    spec.speed = 0;
  } else {
    const int travel_budget = travel_dim - 2 * margin - spec.size;
    const int speed_hi = std::min(2, travel_budget / std::max(1, frames - 1));
    spec.speed = 1 + static_cast<int>(rand_index(rng, static_cast<std::uint64_t>(
                                                          std::max(1, speed_hi))));
    spec.speed = std::min(spec.speed, speed_hi);
    if (spec.speed < 1) spec.speed = 1;
  }
  const int travel = spec.speed * (frames - 1);

  int y_lo = margin, y_hi = height - margin - spec.size;
  int x_lo = margin, x_hi = width - margin - spec.size;
  switch (spec.motion) {
    case Motion::left: x_lo += travel; break;
    case Motion::right: x_hi -= travel; break;
    case Motion::up: y_lo += travel; break;
    case Motion::down: y_hi -= travel; break;
    case Motion::still: break;
  }
  if (y_hi < y_lo || x_hi < x_lo) {
    throw ConfigError("sample_scene_spec: no feasible start position");
  }
  spec.y0 = y_lo + static_cast<int>(rand_index(rng, static_cast<std::uint64_t>(y_hi - y_lo) + 1));
  spec.x0 = x_lo + static_cast<int>(rand_index(rng, static_cast<std::uint64_t>(x_hi - x_lo) + 1));
  return spec;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master ^ ((index + 1) * 0x9E3779B97F4A7C15ULL);
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// --- manifests and corpus ---------------------------------------------------

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path);
  for (const auto& e : entries) {
    out << e.video_id << "\t" << e.stream_path << "\t" << e.caption << "\n";
  }
  if (!out) throw InputError("write failed: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open: " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos ||
        line.find('\t', tab2 + 1) != std::string::npos) {
      throw FormatError(path + ":" + std::to_string(lineno) +
                        ": expected 'video_id<TAB>stream<TAB>caption'");
    }
    entries.push_back({line.substr(0, tab1), line.substr(tab1 + 1, tab2 - tab1 - 1),
                       line.substr(tab2 + 1)});
  }
  return entries;
}

void generate_corpus(const CorpusParams& params, const std::string& out_dir) {
  // Validate everything before touching the filesystem.
  if (params.train_videos < 1 || params.test_videos < 0) {
    throw ConfigError("generate_corpus: need at least one training video");
  }
  if (params.frames < 2) throw ConfigError("generate_corpus: need at least two frames");
  if (params.height < 1 || params.width < 1 || params.gop_size < 1 || params.block_size < 1) {
    throw ConfigError("generate_corpus: non-positive dimension parameter");
  }
  if (params.height % params.block_size != 0 || params.width % params.block_size != 0) {
    throw ConfigError("generate_corpus: frame dims must be multiples of block_size");
  }
  if (params.search_range < 0 || params.search_range > 127) {
    throw ConfigError("generate_corpus: search_range must be in [0,127]");
  }
  if (max_object_size(params.frames, params.height, params.width) < 10) {
    throw ConfigError("generate_corpus: frame too small for the object size/speed ranges");
  }

  fs::create_directories(fs::path(out_dir) / "streams");
  std::vector<ManifestEntry> train, test;
  std::ofstream scenes((fs::path(out_dir) / "scenes.tsv").string(), std::ios::trunc);
  if (!scenes) throw InputError("cannot open for writing: " + out_dir + "/scenes.tsv");

  const int total = params.train_videos + params.test_videos;
  for (int i = 0; i < total; ++i) {
    std::mt19937_64 rng(derive_seed(params.seed, static_cast<std::uint64_t>(i)));
    const SceneSpec spec = sample_scene_spec(params.frames, params.height, params.width, rng);
    GeneratedScene scene = generate_scene(spec, params.frames, params.height, params.width, rng);

    char id[16];
    std::snprintf(id, sizeof(id), "v%05d", i);
    const std::string rel = std::string("streams/") + id + ".tgop";
    const codec::CompressedVideo cv =
        codec::encode(scene.video, params.gop_size, params.block_size, params.search_range);
    codec::write_stream_file((fs::path(out_dir) / rel).string(), cv);

    auto& manifest = i < params.train_videos ? train : test;
    for (const auto& caption : scene.captions) manifest.push_back({id, rel, caption});
    scenes << id << "\t" << to_string(spec.shape) << "\t" << to_string(spec.color) << "\t"
           << to_string(spec.motion) << "\t" << spec.speed << "\t" << spec.size << "\t"
           << spec.x0 << "\t" << spec.y0 << "\n";
  }
  write_manifest((fs::path(out_dir) / "train.manifest").string(), train);
  write_manifest((fs::path(out_dir) / "test.manifest").string(), test);
}

}  // namespace resicap::data
