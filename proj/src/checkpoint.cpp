#include "resicap/checkpoint.hpp"

#include <limits>

#include "resicap/wire.hpp"

namespace resicap {

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params) {
  wire::Writer w;
  w.magic("RAEC");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) w.u64(static_cast<std::uint64_t>(d));
    for (double v : t.values()) w.f64(v);
  }
  w.to_file(path);
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
  wire::Reader r = wire::Reader::from_file(path);
  r.magic("RAEC");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  std::vector<std::pair<std::string, Tensor>> params;
  params.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    std::vector<int> shape(rank);
    std::size_t total = 1;
    for (auto& d : shape) {
      const std::uint64_t v = r.u64();
      if (v == 0 || v > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
        throw CorruptStreamError(path + ": implausible dimension in parameter '" + name + "'");
      }
      d = static_cast<int>(v);
      total *= static_cast<std::size_t>(d);
    }
    std::vector<double> values(total);
    for (auto& v : values) v = r.f64();
    params.emplace_back(std::move(name), Tensor::from_values(shape, std::move(values)));
  }
  r.expect_end();
  return params;
}

}  // namespace resicap
