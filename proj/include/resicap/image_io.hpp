#pragma once

#include <string>
#include <vector>

#include "resicap/codec.hpp"

namespace resicap::imageio {

// Row-major (H,W,C) pixels in [0,1]; C is 1 (gray) or 3 (RGB).
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> pixels;
};

// Binary PGM (P5) for single-channel, PPM (P6) for three-channel, maxval 255.
void write_pnm(const std::string& path, const Image& img);
Image read_pnm(const std::string& path);

// Planar u8 video container: <path> holds frame-major channel planes, the
// sidecar <path>.hdr holds "height width channels frames frame_rate".
void write_raw_video(const std::string& path, const codec::RawVideo& video);
codec::RawVideo read_raw_video(const std::string& path);

// One PGM/PPM per frame, lexicographic filename order.
codec::RawVideo read_frame_dir(const std::string& dir);

// Nearest-neighbor upsampling of a single-channel grid by an integer factor.
Image upsample_nearest(const Image& img, int factor);

}  // namespace resicap::imageio
