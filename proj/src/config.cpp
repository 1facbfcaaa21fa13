#include "resicap/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace resicap::config {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void fail(const std::string& origin, const std::string& message) {
  throw ConfigError(origin + ": " + message);
}

long long parse_int(const std::string& origin, const std::string& key,
                    const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const long long parsed = std::strtoll(value.c_str(), &end, 10);
  if (value.empty() || end != value.c_str() + value.size() || errno == ERANGE) {
    fail(origin, "key '" + key + "' expects an integer, got '" + value + "'");
  }
  return parsed;
}

double parse_double(const std::string& origin, const std::string& key,
                    const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const double parsed = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size() || errno == ERANGE) {
    fail(origin, "key '" + key + "' expects a number, got '" + value + "'");
  }
  return parsed;
}

bool parse_bool(const std::string& origin, const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  fail(origin, "key '" + key + "' expects true or false, got '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& origin, const std::string& key,
                                const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(static_cast<int>(parse_int(origin, key, trim(item))));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

const char* mode_name(codec::ResidualMode mode) {
  return mode == codec::ResidualMode::first_pframe ? "first_pframe" : "gop_accumulated";
}

codec::ResidualMode mode_from_string(const std::string& origin, const std::string& value) {
  if (value == "first_pframe") return codec::ResidualMode::first_pframe;
  if (value == "gop_accumulated") return codec::ResidualMode::gop_accumulated;
  fail(origin, "key 'residual_mode' expects first_pframe or gop_accumulated, got '" + value +
                   "'");
}

// One schema row: how to read the key into the config and how to print it.
struct SchemaEntry {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string& origin, const std::string& value)>
      read;
  std::function<std::string(const ExperimentConfig&)> show;
};

const std::vector<SchemaEntry>& schema() {
  auto int_field = [](const char* key, int ExperimentConfig::*member) {
    return SchemaEntry{
        key,
        [key, member](ExperimentConfig& cfg, const std::string& origin,
                      const std::string& value) {
          const long long v = parse_int(origin, key, value);
          if (v < INT32_MIN || v > INT32_MAX) {
            fail(origin, std::string("key '") + key + "' is out of range");
          }
          cfg.*member = static_cast<int>(v);
        },
        [member](const ExperimentConfig& cfg) { return std::to_string(cfg.*member); }};
  };
  auto double_field = [](const char* key, double ExperimentConfig::*member) {
    return SchemaEntry{key,
                       [key, member](ExperimentConfig& cfg, const std::string& origin,
                                     const std::string& value) {
                         cfg.*member = parse_double(origin, key, value);
                       },
                       [member](const ExperimentConfig& cfg) {
                         return format_double(cfg.*member);
                       }};
  };

  static const std::vector<SchemaEntry> entries = {
      {"seed",
       [](ExperimentConfig& cfg, const std::string& origin, const std::string& value) {
         const long long v = parse_int(origin, "seed", value);
         if (v < 0) fail(origin, "key 'seed' must be non-negative");
         cfg.seed = static_cast<std::uint64_t>(v);
       },
       [](const ExperimentConfig& cfg) { return std::to_string(cfg.seed); }},
      {"data_dir",
       [](ExperimentConfig& cfg, const std::string& origin, const std::string& value) {
         if (value.empty()) fail(origin, "key 'data_dir' must not be empty");
         cfg.data_dir = value;
       },
       [](const ExperimentConfig& cfg) { return cfg.data_dir; }},
      int_field("train_videos", &ExperimentConfig::train_videos),
      int_field("test_videos", &ExperimentConfig::test_videos),
      int_field("frames", &ExperimentConfig::frames),
      int_field("height", &ExperimentConfig::height),
      int_field("width", &ExperimentConfig::width),
      int_field("gop_size", &ExperimentConfig::gop_size),
      int_field("block_size", &ExperimentConfig::block_size),
      int_field("search_range", &ExperimentConfig::search_range),
      int_field("sampled_frames", &ExperimentConfig::sampled_frames),
      {"residual_mode",
       [](ExperimentConfig& cfg, const std::string& origin, const std::string& value) {
         cfg.residual_mode = mode_from_string(origin, value);
       },
       [](const ExperimentConfig& cfg) { return std::string(mode_name(cfg.residual_mode)); }},
      {"cnn_i_channels",
       [](ExperimentConfig& cfg, const std::string& origin, const std::string& value) {
         cfg.cnn_i_channels = parse_int_list(origin, "cnn_i_channels", value);
       },
       [](const ExperimentConfig& cfg) { return format_int_list(cfg.cnn_i_channels); }},
      {"cnn_r_channels",
       [](ExperimentConfig& cfg, const std::string& origin, const std::string& value) {
         cfg.cnn_r_channels = parse_int_list(origin, "cnn_r_channels", value);
       },
       [](const ExperimentConfig& cfg) { return format_int_list(cfg.cnn_r_channels); }},
      {"freeze_extractors",
       [](ExperimentConfig& cfg, const std::string& origin, const std::string& value) {
         cfg.freeze_extractors = parse_bool(origin, "freeze_extractors", value);
       },
       [](const ExperimentConfig& cfg) {
         return std::string(cfg.freeze_extractors ? "true" : "false");
       }},
      int_field("hidden_dim", &ExperimentConfig::hidden_dim),
      int_field("embed_dim", &ExperimentConfig::embed_dim),
      int_field("rep_dim", &ExperimentConfig::rep_dim),
      int_field("d_gate", &ExperimentConfig::d_gate),
      double_field("dropout", &ExperimentConfig::dropout),
      int_field("max_len", &ExperimentConfig::max_len),
      int_field("min_count", &ExperimentConfig::min_count),
      double_field("lr", &ExperimentConfig::lr),
      int_field("batch_size", &ExperimentConfig::batch_size),
      int_field("epochs", &ExperimentConfig::epochs),
      int_field("beam_size", &ExperimentConfig::beam_size),
      {"variant",
       [](ExperimentConfig& cfg, const std::string& origin, const std::string& value) {
         try {
           cfg.variant = rae::variant_from_string(value);
         } catch (const ConfigError&) {
           fail(origin, "key 'variant' has unknown value '" + value + "'");
         }
       },
       [](const ExperimentConfig& cfg) { return rae::to_string(cfg.variant); }},
  };
  return entries;
}

void check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

features::ExtractorConfig ExperimentConfig::cnn_i_cfg() const {
  features::ExtractorConfig cfg;
  for (int l = 0; l < 3; ++l) {
    cfg.layers.push_back({4, 2, 1, cnn_i_channels[static_cast<std::size_t>(l)], true});
  }
  cfg.layers.push_back({3, 1, 1, cnn_i_channels[3], true});
  cfg.frozen = freeze_extractors;
  return cfg;
}

features::ExtractorConfig ExperimentConfig::cnn_r_cfg() const {
  features::ExtractorConfig cfg;
  for (int l = 0; l < 3; ++l) {
    cfg.layers.push_back({4, 2, 1, cnn_r_channels[static_cast<std::size_t>(l)], true});
  }
  cfg.layers.push_back({3, 1, 1, cnn_r_channels[3], true});
  cfg.frozen = freeze_extractors;
  return cfg;
}

int ExperimentConfig::grid_h() const { return features::spatial_out(cnn_i_cfg(), height); }
int ExperimentConfig::grid_w() const { return features::spatial_out(cnn_i_cfg(), width); }

data::CorpusParams ExperimentConfig::corpus_params() const {
  data::CorpusParams p;
  p.train_videos = train_videos;
  p.test_videos = test_videos;
  p.frames = frames;
  p.height = height;
  p.width = width;
  p.gop_size = gop_size;
  p.block_size = block_size;
  p.search_range = search_range;
  p.seed = seed;
  return p;
}

rae::RaeConfig ExperimentConfig::rae_cfg() const {
  rae::RaeConfig cfg;
  cfg.d_i = d_i();
  cfg.d_r = d_r();
  cfg.grid_h = grid_h();
  cfg.grid_w = grid_w();
  cfg.hidden_dim = hidden_dim;
  cfg.d_gate = d_gate;
  cfg.rep_dim = rep_dim;
  cfg.dropout_rate = dropout;
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  std::unordered_map<std::string, const SchemaEntry*> by_key;
  for (const auto& entry : schema()) by_key[entry.key] = &entry;

  std::unordered_set<std::string> seen;
  std::istringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(origin, "line " + std::to_string(line_no) + " is not a key=value entry");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(origin, "line " + std::to_string(line_no) + " has an empty key");
    const auto it = by_key.find(key);
    if (it == by_key.end()) fail(origin, "unknown config key '" + key + "'");
    if (!seen.insert(key).second) fail(origin, "duplicate config key '" + key + "'");
    it->second->read(cfg, origin, value);
  }

  try {
    validate(cfg);
  } catch (const ConfigError& e) {
    fail(origin, e.what());
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path);
}

void validate(const ExperimentConfig& cfg) {
  check(!cfg.data_dir.empty(), "key 'data_dir' must not be empty");
  check(cfg.train_videos >= 1, "key 'train_videos' must be >= 1");
  check(cfg.test_videos >= 1, "key 'test_videos' must be >= 1");
  check(cfg.frames >= 2, "key 'frames' must be >= 2");
  check(cfg.height >= 1 && cfg.width >= 1, "keys 'height'/'width' must be >= 1");
  check(cfg.gop_size >= 1, "key 'gop_size' must be >= 1");
  check(cfg.block_size >= 1, "key 'block_size' must be >= 1");
  check(cfg.height % cfg.block_size == 0 && cfg.width % cfg.block_size == 0,
        "keys 'height'/'width' must be divisible by 'block_size'");
  check(cfg.search_range >= 0 && cfg.search_range <= 127,
        "key 'search_range' must lie in 0..127");
  check(cfg.sampled_frames >= 1, "key 'sampled_frames' must be >= 1");
  check(cfg.cnn_i_channels.size() == 4, "key 'cnn_i_channels' needs exactly 4 entries");
  check(cfg.cnn_r_channels.size() == 4, "key 'cnn_r_channels' needs exactly 4 entries");
  for (int c : cfg.cnn_i_channels) check(c >= 1, "key 'cnn_i_channels' entries must be >= 1");
  for (int c : cfg.cnn_r_channels) check(c >= 1, "key 'cnn_r_channels' entries must be >= 1");
  check(cfg.d_i() > cfg.d_r(),
        "key 'cnn_i_channels' must end wider than 'cnn_r_channels' (D_I > D_r)");
  check(cfg.hidden_dim >= 1, "key 'hidden_dim' must be >= 1");
  check(cfg.embed_dim >= 1, "key 'embed_dim' must be >= 1");
  check(cfg.rep_dim >= 1, "key 'rep_dim' must be >= 1");
  check(cfg.d_gate >= 1, "key 'd_gate' must be >= 1");
  check(cfg.dropout >= 0.0 && cfg.dropout < 1.0, "key 'dropout' must lie in [0, 1)");
  check(cfg.max_len >= 2, "key 'max_len' must be >= 2");
  check(cfg.min_count >= 1, "key 'min_count' must be >= 1");
  check(cfg.lr > 0.0, "key 'lr' must be > 0");
  check(cfg.batch_size >= 1, "key 'batch_size' must be >= 1");
  check(cfg.epochs >= 1, "key 'epochs' must be >= 1");
  check(cfg.beam_size >= 1, "key 'beam_size' must be >= 1");

  // The conv stacks must consume the frame geometry exactly.
  try {
    features::spatial_out(cfg.cnn_i_cfg(), cfg.height);
    features::spatial_out(cfg.cnn_i_cfg(), cfg.width);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("keys 'height'/'width' do not fit the conv stack: ") +
                      e.what());
  }
}

std::string canonical_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& entry : schema()) {
    out += entry.key;
    out += " = ";
    out += entry.show(cfg);
    out += '\n';
  }
  return out;
}

std::string fingerprint(const ExperimentConfig& cfg) {
  const std::string text = canonical_text(cfg);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace resicap::config
