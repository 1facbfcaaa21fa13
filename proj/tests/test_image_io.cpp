#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "resicap/image_io.hpp"

using namespace resicap;
using namespace resicap::imageio;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("resicap_img_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

Image random_image(int h, int w, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image img{h, w, c, {}};
  img.pixels.resize(static_cast<std::size_t>(h) * w * c);
  for (double& p : img.pixels) p = codec::u8_to_unit(static_cast<int>(rng() % 256));
  return img;
}

}  // namespace

TEST_CASE("pgm and ppm round trip") {
  TempDir tmp;
  for (int c : {1, 3}) {
    Image img = random_image(6, 9, c, 42 + c);
    const std::string path = tmp.file(c == 1 ? "a.pgm" : "a.ppm");
    write_pnm(path, img);
    Image back = read_pnm(path);
    CHECK(back.height == 6);
    CHECK(back.width == 9);
    CHECK(back.channels == c);
    CHECK(back.pixels == img.pixels);
  }
}

TEST_CASE("pnm header parsing tolerates comments") {
  TempDir tmp;
  const std::string path = tmp.file("c.pgm");
  std::ofstream out(path, std::ios::binary);
  out << "P5\n# a comment line\n2 2\n# another\n255\n";
  out.write("\x00\x40\x80\xff", 4);
  out.close();
  Image img = read_pnm(path);
  CHECK(img.height == 2);
  CHECK(img.width == 2);
  CHECK(img.channels == 1);
  CHECK(img.pixels[1] == codec::u8_to_unit(0x40));
  CHECK(img.pixels[3] == codec::u8_to_unit(0xff));
}

TEST_CASE("pnm error taxonomy") {
  TempDir tmp;
  SUBCASE("bad magic") {
    std::ofstream(tmp.file("x.pgm")) << "P2\n2 2\n255\n0 0 0 0\n";
    CHECK_THROWS_AS(read_pnm(tmp.file("x.pgm")), FormatError);
  }
  SUBCASE("unsupported maxval") {
    std::ofstream out(tmp.file("m.pgm"), std::ios::binary);
    out << "P5\n2 2\n65535\n";
    out.write("\0\0\0\0\0\0\0\0", 8);
    out.close();
    CHECK_THROWS_AS(read_pnm(tmp.file("m.pgm")), FormatError);
  }
  SUBCASE("truncated pixel data") {
    std::ofstream out(tmp.file("t.pgm"), std::ios::binary);
    out << "P5\n4 4\n255\n";
    out.write("\x01\x02", 2);
    out.close();
    CHECK_THROWS_AS(read_pnm(tmp.file("t.pgm")), TruncationError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_pnm(tmp.file("missing.pgm")), InputError);
  }
  SUBCASE("bad shape on write") {
    Image img{2, 2, 2, std::vector<double>(8, 0.0)};
    CHECK_THROWS_AS(write_pnm(tmp.file("w.pgm"), img), InputError);
  }
}

TEST_CASE("planar raw video round trip with sidecar") {
  TempDir tmp;
  codec::RawVideo v;
  v.height = 4;
  v.width = 6;
  v.channels = 3;
  v.frame_rate = 12.5;
  std::mt19937_64 rng(9);
  for (int f = 0; f < 3; ++f) {
    std::vector<double> img(4 * 6 * 3);
    for (double& p : img) p = codec::u8_to_unit(static_cast<int>(rng() % 256));
    v.frames.push_back(std::move(img));
  }
  const std::string path = tmp.file("clip.raw");
  write_raw_video(path, v);
  CHECK(fs::exists(path));
  CHECK(fs::exists(path + ".hdr"));
  CHECK(fs::file_size(path) == 3u * 3u * 4u * 6u);  // frames * planes * H * W

  codec::RawVideo back = read_raw_video(path);
  CHECK(back.height == 4);
  CHECK(back.width == 6);
  CHECK(back.channels == 3);
  CHECK(back.frame_rate == 12.5);
  REQUIRE(back.frames.size() == 3);
  for (int f = 0; f < 3; ++f) CHECK(back.frames[f] == v.frames[f]);

  SUBCASE("missing sidecar") {
    fs::remove(path + ".hdr");
    CHECK_THROWS_AS(read_raw_video(path), InputError);
  }
  SUBCASE("pixel payload shorter than header promises") {
    std::ofstream(path, std::ios::binary | std::ios::trunc) << "xx";
    CHECK_THROWS_AS(read_raw_video(path), TruncationError);
  }
}

TEST_CASE("frame directory mode reads sorted pnm frames") {
  TempDir tmp;
  Image f0 = random_image(4, 4, 1, 1);
  Image f1 = random_image(4, 4, 1, 2);
  Image f2 = random_image(4, 4, 1, 3);
  write_pnm(tmp.file("frame_002.pgm"), f2);
  write_pnm(tmp.file("frame_000.pgm"), f0);
  write_pnm(tmp.file("frame_001.pgm"), f1);
  std::ofstream(tmp.file("notes.txt")) << "ignored";

  codec::RawVideo v = read_frame_dir(tmp.path.string());
  REQUIRE(v.frames.size() == 3);
  CHECK(v.frames[0] == f0.pixels);
  CHECK(v.frames[1] == f1.pixels);
  CHECK(v.frames[2] == f2.pixels);
  CHECK(v.channels == 1);

  SUBCASE("mixed frame shapes rejected") {
    write_pnm(tmp.file("frame_003.pgm"), random_image(2, 2, 1, 4));
    CHECK_THROWS_AS(read_frame_dir(tmp.path.string()), InputError);
  }
  SUBCASE("empty directory rejected") {
    TempDir empty;
    CHECK_THROWS_AS(read_frame_dir(empty.path.string()), InputError);
  }
}

TEST_CASE("nearest neighbor upsampling") {
  Image g{2, 2, 1, {0.0, 0.25, 0.5, 1.0}};
  Image up = upsample_nearest(g, 2);
  CHECK(up.height == 4);
  CHECK(up.width == 4);
  CHECK(up.pixels == std::vector<double>{0.0, 0.0, 0.25, 0.25, 0.0, 0.0, 0.25, 0.25, 0.5, 0.5,
                                         1.0, 1.0, 0.5, 0.5, 1.0, 1.0});
  CHECK_THROWS_AS(upsample_nearest(g, 0), InputError);
  Image rgb{1, 1, 3, {0, 0, 0}};
  CHECK_THROWS_AS(upsample_nearest(rgb, 2), InputError);
}
