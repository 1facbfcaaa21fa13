// Command-line front end: corpus generation, training, evaluation, the
// four-variant ablation sweep, bitstream inspection, and attention
// visualization, all driven by one key=value config file.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <streambuf>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "resicap/codec.hpp"
#include "resicap/config.hpp"
#include "resicap/data.hpp"
#include "resicap/decoder.hpp"
#include "resicap/errors.hpp"
#include "resicap/image_io.hpp"
#include "resicap/metrics.hpp"
#include "resicap/pipeline.hpp"
#include "resicap/rae.hpp"
#include "resicap/tensor.hpp"

namespace fs = std::filesystem;
using resicap::InputError;
using resicap::Tensor;

namespace {

// Mirrors every character to two underlying buffers, so training progress is
// visible live on stdout while the same lines land in train.log.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int ch) override {
    if (ch == traits_type::eof()) return ch;
    const int ra = a_->sputc(traits_type::to_char_type(ch));
    const int rb = b_->sputc(traits_type::to_char_type(ch));
    return (ra == traits_type::eof() || rb == traits_type::eof()) ? traits_type::eof() : ch;
  }
  int sync() override {
    const int ra = a_->pubsync();
    const int rb = b_->pubsync();
    return (ra == 0 && rb == 0) ? 0 : -1;
  }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<int> beam;
};

void add_override_flags(CLI::App* cmd, Overrides& ov, bool with_variant, bool with_beam,
                        bool with_seed = true) {
  if (with_seed) cmd->add_option("--seed", ov.seed, "Override the config seed");
  if (with_variant) {
    cmd->add_option("--variant", ov.variant,
                    "Override the model variant (full, no_gate, no_gate_no_residuals, "
                    "iframe_only)");
  }
  if (with_beam) cmd->add_option("--beam", ov.beam, "Override the beam width");
}

resicap::config::ExperimentConfig apply_overrides(resicap::config::ExperimentConfig cfg,
                                                  const Overrides& ov) {
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.variant) cfg.variant = resicap::rae::variant_from_string(*ov.variant);
  if (ov.beam) cfg.beam_size = *ov.beam;
  resicap::config::validate(cfg);
  return cfg;
}

// A checkpoint directory stores its training config after the fingerprint
// line, so eval/visualize runs do not need the original config file.
resicap::config::ExperimentConfig config_for_checkpoint(
    const std::string& ckpt_dir, const std::optional<std::string>& config_path) {
  if (config_path) return resicap::config::parse_config_file(*config_path);
  const fs::path path = fs::path(ckpt_dir) / "config.fingerprint";
  std::ifstream in(path);
  if (!in) throw InputError("cannot read '" + path.string() + "'");
  std::string first_line;
  std::getline(in, first_line);  // fingerprint hex; the config text follows
  std::stringstream rest;
  rest << in.rdbuf();
  return resicap::config::parse_config_text(rest.str(), path.string());
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw InputError("short write to '" + path.string() + "'");
}

std::string frame_name(const char* stem, int index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%02d.%s", stem, index, ext);
  return buf;
}

resicap::imageio::Image as_image(int height, int width, int channels,
                                 const std::vector<double>& pixels) {
  resicap::imageio::Image img;
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.pixels = pixels;
  return img;
}

// Channel mean of an (H,W,C) buffer as a single-channel image.
resicap::imageio::Image gray_mean(int height, int width, int channels,
                                  const std::vector<double>& pixels) {
  resicap::imageio::Image img;
  img.height = height;
  img.width = width;
  img.channels = 1;
  img.pixels.resize(static_cast<std::size_t>(height) * width);
  for (std::size_t p = 0; p < img.pixels.size(); ++p) {
    double sum = 0.0;
    for (int c = 0; c < channels; ++c) sum += pixels[p * channels + c];
    img.pixels[p] = sum / channels;
  }
  return img;
}

// --- subcommands ------------------------------------------------------------

int cmd_gen(const std::string& config_path, const Overrides& ov,
            const std::optional<std::string>& out_dir) {
  auto cfg = apply_overrides(resicap::config::parse_config_file(config_path), ov);
  const std::string out = out_dir ? *out_dir : cfg.data_dir;
  resicap::data::generate_corpus(cfg.corpus_params(), out);
  std::cout << "corpus " << out << ": " << cfg.train_videos << " train + " << cfg.test_videos
            << " test videos, " << cfg.frames << "x" << cfg.height << "x" << cfg.width
            << ", seed " << cfg.seed << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const Overrides& ov, const std::string& out_dir) {
  auto cfg = apply_overrides(resicap::config::parse_config_file(config_path), ov);
  const auto samples =
      resicap::pipeline::load_samples((fs::path(cfg.data_dir) / "train.manifest").string());
  const auto vocab = resicap::pipeline::corpus_vocabulary(samples, cfg.min_count);
  std::mt19937_64 rng(cfg.seed);
  auto model = resicap::pipeline::build_model(cfg, vocab.size(), rng);

  fs::create_directories(out_dir);
  std::ofstream log_file(fs::path(out_dir) / "train.log", std::ios::binary);
  if (!log_file) throw InputError("cannot write '" + out_dir + "/train.log'");
  TeeBuf tee(std::cout.rdbuf(), log_file.rdbuf());
  std::ostream log(&tee);

  log << "variant " << resicap::rae::to_string(cfg.variant) << ", " << samples.size()
      << " train videos, vocab " << vocab.size() << "\n";
  const auto result = resicap::pipeline::train_model(model, samples, vocab, cfg, &log);
  resicap::pipeline::save_model(out_dir, model, vocab, cfg);
  log << "checkpoint saved (final loss " << result.epoch_losses.back() << ")\n";
  log.flush();
  return 0;
}

int cmd_eval(const std::string& ckpt_dir, const std::optional<std::string>& config_path,
             const Overrides& ov, const std::optional<std::string>& out_dir) {
  const auto cfg = apply_overrides(config_for_checkpoint(ckpt_dir, config_path), ov);
  const auto loaded = resicap::pipeline::load_model(ckpt_dir, cfg);
  const auto samples =
      resicap::pipeline::load_samples((fs::path(cfg.data_dir) / "test.manifest").string());
  const auto result = resicap::pipeline::evaluate_model(loaded.model, loaded.vocab, samples, cfg);

  const std::string out = out_dir ? *out_dir : ckpt_dir;
  fs::create_directories(out);
  write_text_file(fs::path(out) / "captions.tsv", resicap::pipeline::captions_tsv(result.outputs));
  write_text_file(fs::path(out) / "metrics.tsv", resicap::metrics::format_report(result.scores));
  std::cout << resicap::metrics::format_report(result.scores);
  return 0;
}

int cmd_ablate(const std::string& config_path, const Overrides& ov,
               const std::string& out_dir, const std::vector<std::uint64_t>& seed_list) {
  auto cfg = apply_overrides(resicap::config::parse_config_file(config_path), ov);
  std::vector<std::uint64_t> seeds = seed_list;
  if (seeds.empty()) seeds = {cfg.seed, cfg.seed + 1, cfg.seed + 2};
  const auto result = resicap::pipeline::run_ablation(cfg, seeds, out_dir, &std::cout);
  std::cout << result.table;
  return 0;
}

int cmd_extract(const std::string& stream_path, const std::string& out_dir) {
  const auto cv = resicap::codec::read_stream_file(stream_path);
  const auto& hd = cv.header;
  fs::create_directories(out_dir);
  const char* iframe_ext = hd.channels == 3 ? "ppm" : "pgm";
  for (std::size_t g = 0; g < cv.gops.size(); ++g) {
    const auto& gop = cv.gops[g];
    const int index = static_cast<int>(g);
    resicap::imageio::write_pnm((fs::path(out_dir) / frame_name("iframe", index, iframe_ext)).string(),
                                as_image(hd.height, hd.width, hd.channels, gop.iframe));
    // First P-frame residual mapped from [-1,1] into [0,1]; a P-frame-less
    // GOP gets the motionless mid-gray map.
    std::vector<double> mapped(gop.iframe.size(), 0.5);
    if (!gop.pframes.empty()) {
      for (std::size_t p = 0; p < mapped.size(); ++p) {
        mapped[p] = (gop.pframes[0].residual[p] + 1.0) / 2.0;
      }
    }
    resicap::imageio::write_pnm((fs::path(out_dir) / frame_name("residual", index, "pgm")).string(),
                                gray_mean(hd.height, hd.width, hd.channels, mapped));
  }
  std::cout << "stream " << stream_path << ": " << hd.height << "x" << hd.width << "x"
            << hd.channels << ", " << cv.gops.size() << " gops -> " << out_dir << "\n";
  return 0;
}

int cmd_visualize(const std::string& ckpt_dir, const std::string& stream_path,
                  const std::optional<std::string>& config_path, const Overrides& ov,
                  const std::string& out_dir) {
  const auto cfg = apply_overrides(config_for_checkpoint(ckpt_dir, config_path), ov);
  const auto loaded = resicap::pipeline::load_model(ckpt_dir, cfg);
  const auto cv = resicap::codec::read_stream_file(stream_path);

  const auto fm = resicap::pipeline::compute_features(loaded.model, cv, cfg);
  const auto stack = resicap::codec::sample_frame_stack(cv, cfg.sampled_frames, cfg.residual_mode);

  // Attention of the first decoding step: the decoder state is all zeros
  // before any token is consumed, so the maps reflect the visual input alone.
  const auto& rae_params = loaded.model.caption.rae_params;
  const auto views = resicap::rae::pool_views(fm, rae_params.reduce_kernel);
  const Tensor h0 = Tensor::zeros({cfg.hidden_dim});
  const bool no_residual_term =
      loaded.model.caption.variant == resicap::rae::AblationVariant::NO_GATE_NO_RESIDUALS;
  const auto attention = resicap::rae::sam_forward(views, h0, rae_params.sam, no_residual_term);

  fs::create_directories(out_dir);
  const char* iframe_ext = stack.channels == 3 ? "ppm" : "pgm";
  for (std::size_t k = 0; k < stack.p_i.size(); ++k) {
    const int index = static_cast<int>(k);
    resicap::imageio::write_pnm((fs::path(out_dir) / frame_name("iframe", index, iframe_ext)).string(),
                                as_image(stack.height, stack.width, stack.channels, stack.p_i[k]));
    resicap::imageio::write_pnm((fs::path(out_dir) / frame_name("residual", index, "pgm")).string(),
                                gray_mean(stack.height, stack.width, stack.channels, stack.p_r[k]));
  }
  resicap::rae::write_attention_maps(out_dir, attention.a_big_r, cfg.block_size);

  const auto hypotheses = resicap::decoder::beam_search(fm, loaded.model.caption, cfg.beam_size);
  const std::string caption = resicap::data::decode_tokens(hypotheses.front().tokens, loaded.vocab);
  write_text_file(fs::path(out_dir) / "caption.txt", caption + "\n");
  std::cout << caption << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Captioning for block-motion compressed videos of moving shapes"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> opt_config;
  std::optional<std::string> opt_out;
  std::string out_dir;
  std::string ckpt_dir;
  std::string stream_path;
  std::vector<std::uint64_t> seed_list;
  Overrides ov;

  auto* gen = app.add_subcommand("gen", "Generate the synthetic corpus for a config");
  gen->add_option("--config", config_path, "Experiment config file")->required();
  gen->add_option("--out", opt_out, "Corpus directory (default: the config's data_dir)");
  add_override_flags(gen, ov, false, false);

  auto* train = app.add_subcommand("train", "Train a captioning model");
  train->add_option("--config", config_path, "Experiment config file")->required();
  train->add_option("--out", out_dir, "Checkpoint directory")->required();
  add_override_flags(train, ov, true, false);

  auto* eval = app.add_subcommand("eval", "Caption the test split and score it");
  eval->add_option("ckpt", ckpt_dir, "Checkpoint directory")->required();
  eval->add_option("--config", opt_config, "Config file (default: the checkpoint's own)");
  eval->add_option("--out", opt_out, "Report directory (default: the checkpoint directory)");
  add_override_flags(eval, ov, true, true);

  auto* ablate = app.add_subcommand("ablate", "Train and score all four variants over seeds");
  ablate->add_option("--config", config_path, "Experiment config file")->required();
  ablate->add_option("--out", out_dir, "Directory for ablation.tsv")->required();
  ablate->add_option("--seed", seed_list, "Seeds to sweep (default: config seed and the next two)")
      ->delimiter(',');
  add_override_flags(ablate, ov, false, true, /*with_seed=*/false);

  auto* extract = app.add_subcommand("extract", "Dump a bitstream's I-frames and residuals");
  extract->add_option("stream", stream_path, "Compressed video bitstream")->required();
  extract->add_option("--out", out_dir, "Image directory")->required();

  auto* visualize = app.add_subcommand("visualize", "Render attention over one video");
  visualize->add_option("ckpt", ckpt_dir, "Checkpoint directory")->required();
  visualize->add_option("stream", stream_path, "Compressed video bitstream")->required();
  visualize->add_option("--config", opt_config, "Config file (default: the checkpoint's own)");
  visualize->add_option("--out", out_dir, "Image directory")->required();
  add_override_flags(visualize, ov, true, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(config_path, ov, opt_out);
    if (train->parsed()) return cmd_train(config_path, ov, out_dir);
    if (eval->parsed()) return cmd_eval(ckpt_dir, opt_config, ov, opt_out);
    if (ablate->parsed()) return cmd_ablate(config_path, ov, out_dir, seed_list);
    if (extract->parsed()) return cmd_extract(stream_path, out_dir);
    if (visualize->parsed()) return cmd_visualize(ckpt_dir, stream_path, opt_config, ov, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
