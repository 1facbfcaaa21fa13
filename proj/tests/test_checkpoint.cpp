#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "doctest.h"
#include "resicap/checkpoint.hpp"

using namespace resicap;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("resicap_ckpt_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const char* name) const { return (path / name).string(); }
};

std::vector<char> read_bytes(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir tmp;
  std::vector<std::pair<std::string, Tensor>> params;
  params.emplace_back("enc.w", Tensor::from_values({2, 3}, {1.5, -2.25, 0.0, -0.0, 1e-300,
                                                            std::numeric_limits<double>::min()}));
  params.emplace_back("enc.b", Tensor::from_values({3}, {-1.0, 12345.6789, 3.0}));
  params.emplace_back("s", Tensor::scalar(0.125));

  const std::string path = tmp.file("model.raec");
  save_checkpoint(path, params);
  auto loaded = load_checkpoint(path);

  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(loaded[i].first == params[i].first);
    CHECK(loaded[i].second.shape() == params[i].second.shape());
    REQUIRE(loaded[i].second.size() == params[i].second.size());
    for (std::size_t j = 0; j < params[i].second.size(); ++j) {
      // Bitwise comparison: -0.0 must stay -0.0.
      std::uint64_t a, b;
      std::memcpy(&a, &params[i].second.values()[j], 8);
      std::memcpy(&b, &loaded[i].second.values()[j], 8);
      CHECK(a == b);
    }
    CHECK_FALSE(loaded[i].second.requires_grad());
  }

  // Saving the same params twice produces identical bytes.
  const std::string path2 = tmp.file("model2.raec");
  save_checkpoint(path2, params);
  CHECK(read_bytes(path) == read_bytes(path2));

  // Empty parameter list round-trips too.
  const std::string path3 = tmp.file("empty.raec");
  save_checkpoint(path3, {});
  CHECK(load_checkpoint(path3).empty());
}

TEST_CASE("checkpoint header starts with magic and version") {
  TempDir tmp;
  const std::string path = tmp.file("m.raec");
  save_checkpoint(path, {{"x", Tensor::scalar(1.0)}});
  auto bytes = read_bytes(path);
  REQUIRE(bytes.size() >= 8);
  CHECK(bytes[0] == 'R');
  CHECK(bytes[1] == 'A');
  CHECK(bytes[2] == 'E');
  CHECK(bytes[3] == 'C');
  // version 1, little endian
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 0);
  CHECK(bytes[7] == 0);
}

TEST_CASE("checkpoint error taxonomy") {
  TempDir tmp;
  const std::string good = tmp.file("good.raec");
  save_checkpoint(good, {{"w", Tensor::from_values({2}, {1.0, 2.0})}});
  auto bytes = read_bytes(good);

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(tmp.file("nope.raec")), InputError);
  }
  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    write_bytes(tmp.file("bad.raec"), bad);
    CHECK_THROWS_AS(load_checkpoint(tmp.file("bad.raec")), FormatError);
  }
  SUBCASE("unsupported version") {
    auto bad = bytes;
    bad[4] = 99;
    write_bytes(tmp.file("ver.raec"), bad);
    CHECK_THROWS_AS(load_checkpoint(tmp.file("ver.raec")), VersionError);
  }
  SUBCASE("truncation at every prefix") {
    // Any strict prefix must raise TruncationError (after the magic/version
    // checks pass; shorter than that is also truncation unless magic broken).
    for (std::size_t cut : {std::size_t{2}, std::size_t{6}, std::size_t{10},
                            std::size_t{14}, std::size_t{20}, bytes.size() - 1}) {
      auto bad = std::vector<char>(bytes.begin(), bytes.begin() + static_cast<long>(cut));
      write_bytes(tmp.file("cut.raec"), bad);
      CHECK_THROWS_AS(load_checkpoint(tmp.file("cut.raec")), TruncationError);
    }
  }
  SUBCASE("trailing bytes rejected") {
    auto bad = bytes;
    bad.push_back(0);
    write_bytes(tmp.file("trail.raec"), bad);
    CHECK_THROWS_AS(load_checkpoint(tmp.file("trail.raec")), CorruptStreamError);
  }
}
