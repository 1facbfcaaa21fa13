#include "resicap/pipeline.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "resicap/checkpoint.hpp"

namespace fs = std::filesystem;

namespace resicap::pipeline {

namespace {

// Distinguishes the schedule rng stream from the model-init stream (which is
// seeded with cfg.seed directly).
constexpr std::uint64_t kScheduleStream = 0x7363686564756c65ULL;

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string pct1(double score) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * score);
  return buf;
}

Tensor frames_to_tensor(const std::vector<std::vector<double>>& frames, int height, int width,
                        int channels) {
  std::vector<double> buf;
  buf.reserve(frames.size() * static_cast<std::size_t>(height) * width * channels);
  for (const auto& frame : frames) buf.insert(buf.end(), frame.begin(), frame.end());
  return Tensor::from_values({static_cast<int>(frames.size()), height, width, channels},
                             std::move(buf));
}

// Drops the autodiff graph behind a tensor; used to cache frozen features.
Tensor detach(const Tensor& t) { return Tensor::from_values(t.shape(), t.values()); }

std::string shape_string(const std::vector<int>& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

int eval_thread_count(int jobs) {
  int threads = 0;
  if (const char* env = std::getenv("RAE_THREADS")) {
    char* end = nullptr;
    const long parsed = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && parsed > 0) threads = static_cast<int>(parsed);
  }
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads <= 0) threads = 1;
  return std::clamp(threads, 1, jobs);
}

double sample_stddev(const std::vector<double>& values, double mean) {
  if (values.size() < 2) return 0.0;
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

}  // namespace

std::vector<VideoSample> load_samples(const std::string& manifest_path) {
  const auto rows = data::read_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<VideoSample> samples;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& row : rows) {
    auto it = index.find(row.video_id);
    if (it == index.end()) {
      it = index.emplace(row.video_id, samples.size()).first;
      samples.push_back({row.video_id, (base / row.stream_path).string(), {}});
    }
    samples[it->second].captions.push_back(row.caption);
  }
  return samples;
}

data::Vocabulary corpus_vocabulary(const std::vector<VideoSample>& samples, int min_count) {
  std::vector<std::string> captions;
  for (const auto& sample : samples) {
    captions.insert(captions.end(), sample.captions.begin(), sample.captions.end());
  }
  return data::build_vocabulary(captions, min_count);
}

Model build_model(const config::ExperimentConfig& cfg, int vocab_size, std::mt19937_64& rng) {
  Model model;
  model.cnn_i = features::make_extractor(cfg.cnn_i_cfg(), 3, rng);
  model.cnn_r = features::make_extractor(cfg.cnn_r_cfg(), 3, rng);
  model.caption.rae_cfg = cfg.rae_cfg();
  model.caption.rae_params = rae::make_rae_params(model.caption.rae_cfg, rng);
  model.caption.variant = cfg.variant;

  decoder::DecoderConfig dec_cfg;
  dec_cfg.vocab_size = vocab_size;
  dec_cfg.embed_dim = cfg.embed_dim;
  dec_cfg.hidden_dim = cfg.hidden_dim;
  dec_cfg.rep_dim = cfg.rep_dim;
  dec_cfg.max_len = cfg.max_len;
  dec_cfg.dropout_rate = cfg.dropout;
  model.caption.dec_cfg = dec_cfg;
  model.caption.dec_params = decoder::make_decoder_params(dec_cfg, rng);
  return model;
}

std::vector<std::pair<std::string, Tensor>> named_parameters(const Model& model) {
  std::vector<std::pair<std::string, Tensor>> named = model.cnn_i.parameters("cnn_i");
  for (auto& entry : model.cnn_r.parameters("cnn_r")) named.push_back(std::move(entry));
  for (auto& entry : model.caption.rae_params.parameters("rae")) named.push_back(std::move(entry));
  for (auto& entry : model.caption.dec_params.parameters("dec")) named.push_back(std::move(entry));
  return named;
}

std::vector<Tensor> trainable_parameters(const Model& model) {
  std::vector<Tensor> trainable;
  for (auto& [name, tensor] : named_parameters(model)) {
    if (tensor.requires_grad()) trainable.push_back(tensor);
  }
  return trainable;
}

bool uses_residual_features(rae::AblationVariant variant) {
  return variant == rae::AblationVariant::FULL || variant == rae::AblationVariant::NO_GATE;
}

features::FeatureMaps compute_features(const Model& model, const codec::CompressedVideo& cv,
                                       const config::ExperimentConfig& cfg) {
  const codec::FrameStack stack =
      codec::sample_frame_stack(cv, cfg.sampled_frames, cfg.residual_mode);
  const Tensor pixels_i =
      frames_to_tensor(stack.p_i, stack.height, stack.width, stack.channels);
  const Tensor v_i = features::extractor_forward(model.cnn_i, pixels_i);

  Tensor a_r;
  if (uses_residual_features(model.caption.variant)) {
    const Tensor pixels_r =
        frames_to_tensor(stack.p_r, stack.height, stack.width, stack.channels);
    a_r = features::extractor_forward(model.cnn_r, pixels_r);
  } else {
    a_r = Tensor::zeros({v_i.shape()[0], v_i.shape()[1], v_i.shape()[2],
                         model.cnn_r.cfg.out_channels()});
  }
  return features::make_feature_maps(v_i, a_r);
}

TrainResult train_model(Model& model, const std::vector<VideoSample>& samples,
                        const data::Vocabulary& vocab, const config::ExperimentConfig& cfg,
                        std::ostream* log) {
  if (samples.empty()) throw InputError("training needs at least one video");

  struct TrainPair {
    int video = 0;
    std::vector<int> ids;
  };
  std::vector<TrainPair> pairs;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    for (const auto& caption : samples[s].captions) {
      pairs.push_back({static_cast<int>(s), data::encode_caption(caption, vocab, cfg.max_len)});
    }
  }
  if (pairs.empty()) throw InputError("training needs at least one caption");

  std::vector<codec::CompressedVideo> videos;
  videos.reserve(samples.size());
  for (const auto& sample : samples) videos.push_back(codec::read_stream_file(sample.stream_path));

  // Frozen extractors never change, so their features are computed once.
  std::vector<features::FeatureMaps> frozen_features;
  if (cfg.freeze_extractors) {
    frozen_features.reserve(videos.size());
    for (const auto& cv : videos) {
      const features::FeatureMaps fm = compute_features(model, cv, cfg);
      frozen_features.push_back(features::make_feature_maps(detach(fm.v_i), detach(fm.a_r)));
    }
  }

  AdamOptimizer optimizer(trainable_parameters(model), cfg.lr);
  std::mt19937_64 schedule_rng(data::derive_seed(cfg.seed, kScheduleStream));

  std::vector<int> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  bool first_batch = true;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), schedule_rng);
    double epoch_nll = 0.0;
    long long epoch_steps = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));

      std::unordered_map<int, features::FeatureMaps> batch_features;
      Tensor total;
      bool have_total = false;
      long long steps = 0;
      for (std::size_t b = start; b < stop; ++b) {
        const TrainPair& pair = pairs[static_cast<std::size_t>(order[b])];
        const features::FeatureMaps* fm;
        if (cfg.freeze_extractors) {
          fm = &frozen_features[static_cast<std::size_t>(pair.video)];
        } else {
          auto it = batch_features.find(pair.video);
          if (it == batch_features.end()) {
            it = batch_features
                     .emplace(pair.video,
                              compute_features(model, videos[static_cast<std::size_t>(pair.video)],
                                               cfg))
                     .first;
          }
          fm = &it->second;
        }
        const Tensor sequence_nll =
            decoder::teacher_forced_loss(*fm, pair.ids, model.caption, true, schedule_rng);
        total = have_total ? add(total, sequence_nll) : sequence_nll;
        have_total = true;
        steps += static_cast<long long>(pair.ids.size()) - 1;
      }

      const double batch_sum = total.item();
      const double batch_loss = batch_sum / static_cast<double>(steps);
      if (first_batch) {
        result.initial_batch_loss = batch_loss;
        first_batch = false;
      }
      const Tensor loss = mul_scalar(total, 1.0 / static_cast<double>(steps));
      loss.backward();
      optimizer.step();

      epoch_nll += batch_sum;
      epoch_steps += steps;
    }
    result.epoch_losses.push_back(epoch_nll / static_cast<double>(epoch_steps));
    if (log) {
      *log << "epoch " << epoch << "/" << cfg.epochs << " loss "
           << fixed6(result.epoch_losses.back()) << "\n";
    }
  }
  return result;
}

void save_model(const std::string& dir, const Model& model, const data::Vocabulary& vocab,
                const config::ExperimentConfig& cfg) {
  fs::create_directories(dir);
  save_checkpoint((fs::path(dir) / "model.ckpt").string(), named_parameters(model));
  data::save_vocabulary((fs::path(dir) / "model.vocab").string(), vocab);
  const std::string fp_path = (fs::path(dir) / "config.fingerprint").string();
  std::ofstream out(fp_path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + fp_path);
  out << config::fingerprint(cfg) << "\n" << config::canonical_text(cfg);
  if (!out) throw InputError("write failed: " + fp_path);
}

LoadedModel load_model(const std::string& dir, const config::ExperimentConfig& cfg) {
  LoadedModel loaded;
  loaded.vocab = data::load_vocabulary((fs::path(dir) / "model.vocab").string());
  std::mt19937_64 skeleton_rng(0);
  loaded.model = build_model(cfg, loaded.vocab.size(), skeleton_rng);

  const auto stored = load_checkpoint((fs::path(dir) / "model.ckpt").string());
  auto live = named_parameters(loaded.model);
  if (stored.size() != live.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(stored.size()) +
                      " parameters but the config expects " + std::to_string(live.size()));
  }
  for (std::size_t i = 0; i < live.size(); ++i) {
    if (stored[i].first != live[i].first) {
      throw ConfigError("checkpoint parameter '" + stored[i].first + "' where '" +
                        live[i].first + "' was expected");
    }
    if (stored[i].second.shape() != live[i].second.shape()) {
      throw ConfigError("parameter '" + live[i].first + "' has shape " +
                        shape_string(stored[i].second.shape()) + " but the config expects " +
                        shape_string(live[i].second.shape()));
    }
    live[i].second.mutable_values() = stored[i].second.values();
  }
  return loaded;
}

EvalResult evaluate_model(const Model& model, const data::Vocabulary& vocab,
                          const std::vector<VideoSample>& samples,
                          const config::ExperimentConfig& cfg) {
  if (samples.empty()) throw InputError("evaluation needs at least one video");
  const int count = static_cast<int>(samples.size());

  std::vector<CaptionOutput> outputs(samples.size());
  std::vector<metrics::EvalPair> pairs(samples.size());
  std::vector<std::exception_ptr> failures(samples.size());

  std::atomic<int> next{0};
  const auto worker = [&]() {
    for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      const auto index = static_cast<std::size_t>(i);
      try {
        const codec::CompressedVideo cv = codec::read_stream_file(samples[index].stream_path);
        const features::FeatureMaps fm = compute_features(model, cv, cfg);
        const auto hypotheses = decoder::beam_search(fm, model.caption, cfg.beam_size);
        const auto& best = hypotheses.front();

        outputs[index].video_id = samples[index].video_id;
        outputs[index].caption = data::decode_tokens(best.tokens, vocab);
        outputs[index].log_prob = best.log_prob;

        metrics::EvalPair pair;
        for (int id : best.tokens) {
          if (id == data::kEosId) break;
          if (id == data::kBosId || id == data::kPadId) continue;
          pair.candidate.push_back(vocab.token(id));
        }
        for (const auto& caption : samples[index].captions) {
          pair.references.push_back(data::tokenize(caption));
        }
        pairs[index] = std::move(pair);
      } catch (...) {
        failures[index] = std::current_exception();
      }
    }
  };

  const int threads = eval_thread_count(count);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& thread : pool) thread.join();
  }
  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }

  EvalResult result;
  result.outputs = std::move(outputs);
  result.scores = metrics::score_all(pairs);
  return result;
}

std::string captions_tsv(const std::vector<CaptionOutput>& outputs) {
  std::string text;
  for (const auto& out : outputs) {
    text += out.video_id;
    text += '\t';
    text += out.caption;
    text += '\t';
    text += fixed6(out.log_prob);
    text += '\n';
  }
  return text;
}

AblationResult run_ablation(const config::ExperimentConfig& cfg,
                            const std::vector<std::uint64_t>& seeds, const std::string& out_dir,
                            std::ostream* log) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");

  const fs::path data_dir(cfg.data_dir);
  const auto train_samples = load_samples((data_dir / "train.manifest").string());
  const auto test_samples = load_samples((data_dir / "test.manifest").string());
  const data::Vocabulary vocab = corpus_vocabulary(train_samples, cfg.min_count);

  fs::create_directories(out_dir);
  const std::string partial_path = (fs::path(out_dir) / "ablation.partial.tsv").string();
  std::ofstream partial(partial_path, std::ios::binary | std::ios::trunc);
  if (!partial) throw InputError("cannot open for writing: " + partial_path);
  partial << "variant\tseed\tBLEU@1\tBLEU@2\tBLEU@3\tBLEU@4\tCIDEr\tROUGE-L\n" << std::flush;

  const std::array<rae::AblationVariant, 4> row_order = {
      rae::AblationVariant::IFRAME_ONLY, rae::AblationVariant::NO_GATE_NO_RESIDUALS,
      rae::AblationVariant::NO_GATE, rae::AblationVariant::FULL};

  AblationResult result;
  for (const auto variant : row_order) {
    std::vector<std::vector<double>> seed_scores;
    std::vector<std::string> score_names;
    for (const std::uint64_t seed : seeds) {
      config::ExperimentConfig cell_cfg = cfg;
      cell_cfg.variant = variant;
      cell_cfg.seed = seed;

      std::mt19937_64 rng(seed);
      Model model = build_model(cell_cfg, vocab.size(), rng);
      train_model(model, train_samples, vocab, cell_cfg, nullptr);
      const EvalResult eval = evaluate_model(model, vocab, test_samples, cell_cfg);

      AblationCell cell;
      cell.variant = variant;
      cell.seed = seed;
      cell.scores = eval.scores;
      result.cells.push_back(cell);

      partial << rae::to_string(variant) << '\t' << seed;
      std::vector<double> values;
      score_names.clear();
      for (const auto& [name, value] : eval.scores) {
        partial << '\t' << fixed6(value);
        values.push_back(value);
        score_names.push_back(name);
      }
      partial << '\n' << std::flush;
      seed_scores.push_back(std::move(values));

      if (log) {
        *log << rae::to_string(variant) << " seed " << seed << ": BLEU@4 "
             << pct1(eval.scores[3].second) << " CIDEr " << pct1(eval.scores[4].second)
             << " ROUGE-L " << pct1(eval.scores[5].second) << "\n";
      }
    }

    AblationRow row;
    row.variant = variant;
    for (std::size_t m = 0; m < score_names.size(); ++m) {
      std::vector<double> column;
      column.reserve(seed_scores.size());
      for (const auto& values : seed_scores) column.push_back(values[m]);
      const double mean =
          std::accumulate(column.begin(), column.end(), 0.0) / static_cast<double>(column.size());
      row.means.emplace_back(score_names[m], mean);
      row.stddevs.emplace_back(score_names[m], sample_stddev(column, mean));
    }
    result.rows.push_back(std::move(row));
  }

  std::string table = "Model\tBLEU@1\tBLEU@2\tBLEU@3\tBLEU@4\tMETEOR\tCIDEr\tROUGE-L\n";
  for (const auto& row : result.rows) {
    table += rae::to_string(row.variant);
    for (std::size_t m = 0; m < row.means.size(); ++m) {
      if (m == 4) table += "\t-";  // METEOR sits before CIDEr in the column order
      table += '\t';
      table += pct1(row.means[m].second);
      table += "+-";
      table += pct1(row.stddevs[m].second);
    }
    table += '\n';
  }
  result.table = table;

  const std::string table_path = (fs::path(out_dir) / "ablation.tsv").string();
  std::ofstream table_out(table_path, std::ios::binary | std::ios::trunc);
  if (!table_out) throw InputError("cannot open for writing: " + table_path);
  table_out << table;
  if (!table_out) throw InputError("write failed: " + table_path);
  return result;
}

}  // namespace resicap::pipeline
