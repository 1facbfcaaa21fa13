#include "resicap/image_io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace resicap::imageio {

namespace fs = std::filesystem;

namespace {

void check_image(const Image& img, const char* op) {
  if (img.channels != 1 && img.channels != 3) {
    throw InputError(std::string(op) + ": channels must be 1 or 3");
  }
  if (img.height < 1 || img.width < 1) throw InputError(std::string(op) + ": empty image");
  if (img.pixels.size() != static_cast<std::size_t>(img.height) * img.width * img.channels) {
    throw InputError(std::string(op) + ": pixel buffer does not match dimensions");
  }
}

// Reads one whitespace-delimited PNM header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

int parse_int(const std::string& tok, const std::string& path, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError(path + ": bad " + what + " in header");
  }
}

}  // namespace

void write_pnm(const std::string& path, const Image& img) {
  check_image(img, "write_pnm");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << (img.channels == 1 ? "P5" : "P6") << "\n"
      << img.width << " " << img.height << "\n255\n";
  std::string bytes;
  bytes.reserve(img.pixels.size());
  for (double p : img.pixels) {
    const int v = std::clamp(codec::unit_to_u8(p), 0, 255);
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed: " + path);
}

Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path);
  const std::string magic = next_token(in);
  int channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw FormatError(path + ": unsupported PNM magic '" + magic + "'");
  }
  const int width = parse_int(next_token(in), path, "width");
  const int height = parse_int(next_token(in), path, "height");
  const int maxval = parse_int(next_token(in), path, "maxval");
  if (width < 1 || height < 1) throw FormatError(path + ": non-positive dimensions");
  if (maxval != 255) {
    throw FormatError(path + ": only maxval 255 is supported, got " + std::to_string(maxval));
  }
  // The header ends with exactly one whitespace byte (already consumed by the
  // tokenizer); the raster follows.
  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  std::string raster(count, '\0');
  in.read(raster.data(), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) {
    throw TruncationError(path + ": raster shorter than header promises");
  }
  Image img{height, width, channels, {}};
  img.pixels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    img.pixels[i] = codec::u8_to_unit(static_cast<unsigned char>(raster[i]));
  }
  return img;
}

void write_raw_video(const std::string& path, const codec::RawVideo& video) {
  if (video.frames.empty()) throw InputError("write_raw_video: empty video");
  const int H = video.height, W = video.width, C = video.channels;
  if (C != 1 && C != 3) throw InputError("write_raw_video: channels must be 1 or 3");
  const std::size_t frame_len = static_cast<std::size_t>(H) * W * C;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path);
  std::string bytes;
  bytes.reserve(frame_len);
  for (const auto& frame : video.frames) {
    if (frame.size() != frame_len) throw InputError("write_raw_video: frame size mismatch");
    bytes.clear();
    // Interleaved (H,W,C) memory order becomes planar on disk.
    for (int c = 0; c < C; ++c) {
      for (int i = 0; i < H * W; ++i) {
        const int v = std::clamp(codec::unit_to_u8(frame[static_cast<std::size_t>(i) * C + c]), 0, 255);
        bytes.push_back(static_cast<char>(static_cast<unsigned char>(v)));
      }
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw InputError("write failed: " + path);
  std::ofstream hdr(path + ".hdr", std::ios::trunc);
  if (!hdr) throw InputError("cannot open for writing: " + path + ".hdr");
  hdr << H << " " << W << " " << C << " " << video.frames.size() << " " << video.frame_rate
      << "\n";
}

codec::RawVideo read_raw_video(const std::string& path) {
  std::ifstream hdr(path + ".hdr");
  if (!hdr) throw InputError("cannot open sidecar header: " + path + ".hdr");
  int H = 0, W = 0, C = 0;
  long frames = 0;
  double rate = 0.0;
  if (!(hdr >> H >> W >> C >> frames >> rate)) {
    throw FormatError(path + ".hdr: expected 'height width channels frames frame_rate'");
  }
  if (H < 1 || W < 1 || (C != 1 && C != 3) || frames < 1) {
    throw FormatError(path + ".hdr: implausible header values");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path);
  const std::size_t frame_len = static_cast<std::size_t>(H) * W * C;
  codec::RawVideo v;
  v.height = H;
  v.width = W;
  v.channels = C;
  v.frame_rate = rate;
  std::string plane(frame_len, '\0');
  for (long f = 0; f < frames; ++f) {
    in.read(plane.data(), static_cast<std::streamsize>(frame_len));
    if (static_cast<std::size_t>(in.gcount()) != frame_len) {
      throw TruncationError(path + ": fewer pixel bytes than the sidecar promises");
    }
    std::vector<double> frame(frame_len);
    for (int c = 0; c < C; ++c) {
      for (int i = 0; i < H * W; ++i) {
        frame[static_cast<std::size_t>(i) * C + c] =
            codec::u8_to_unit(static_cast<unsigned char>(plane[static_cast<std::size_t>(c) * H * W + i]));
      }
    }
    v.frames.push_back(std::move(frame));
  }
  return v;
}

codec::RawVideo read_frame_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") paths.push_back(entry.path().string());
  }
  if (paths.empty()) throw InputError("no .pgm/.ppm frames in " + dir);
  std::sort(paths.begin(), paths.end());

  codec::RawVideo v;
  for (const auto& p : paths) {
    Image img = read_pnm(p);
    if (v.frames.empty()) {
      v.height = img.height;
      v.width = img.width;
      v.channels = img.channels;
    } else if (img.height != v.height || img.width != v.width || img.channels != v.channels) {
      throw InputError(p + ": frame shape differs from earlier frames");
    }
    v.frames.push_back(std::move(img.pixels));
  }
  return v;
}

Image upsample_nearest(const Image& img, int factor) {
  if (factor < 1) throw InputError("upsample_nearest: factor must be >= 1");
  if (img.channels != 1) throw InputError("upsample_nearest: single-channel input expected");
  check_image(img, "upsample_nearest");
  Image out{img.height * factor, img.width * factor, 1, {}};
  out.pixels.resize(static_cast<std::size_t>(out.height) * out.width);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      out.pixels[static_cast<std::size_t>(y) * out.width + x] =
          img.pixels[static_cast<std::size_t>(y / factor) * img.width + (x / factor)];
    }
  }
  return out;
}

}  // namespace resicap::imageio
