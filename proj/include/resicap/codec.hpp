#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "resicap/errors.hpp"

namespace resicap::codec {

// One shared quantization helper pair so every producer and consumer of pixel
// data lands on identical doubles.
inline double u8_to_unit(int v) { return static_cast<double>(v) / 255.0; }
inline int unit_to_u8(double v) { return static_cast<int>(std::lround(v * 255.0)); }

// Frames are flat row-major (H, W, C) buffers with values in [0,1].
struct RawVideo {
  int height = 0;
  int width = 0;
  int channels = 0;
  double frame_rate = 0.0;  // metadata only, not serialized
  std::vector<std::vector<double>> frames;
};

// Motion vectors are (dy,dx) fetch offsets: block (by,bx) of the current
// frame is predicted from the previous reconstruction at
// (by*block_size+dy, bx*block_size+dx).
struct PFrame {
  std::vector<std::pair<int, int>> motion_vectors;  // block-grid row-major
  std::vector<double> residual;                     // (H,W,C) in [-1,1]
};

struct Gop {
  std::vector<double> iframe;  // (H,W,C) in [0,1]
  std::vector<PFrame> pframes;
};

struct StreamHeader {
  int height = 0;
  int width = 0;
  int channels = 0;
  int block_size = 0;
  int search_range = 0;
  int gop_size = 0;
};

struct CompressedVideo {
  StreamHeader header;
  std::vector<Gop> gops;
};

// Sampled network input: n aligned (I-frame, residual) pairs, residuals
// mapped into [0,1].
struct FrameStack {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::vector<double>> p_i;
  std::vector<std::vector<double>> p_r;
};

enum class ResidualMode { first_pframe, gop_accumulated };

inline constexpr std::uint16_t kStreamVersion = 1;
inline constexpr int kDefaultBlockSize = 8;
inline constexpr int kDefaultSearchRange = 4;
inline constexpr int kDefaultGopSize = 12;

// Exhaustive SAD block search against the previous reconstructed frame;
// residuals are exact, so decoding reproduces the input losslessly (for
// inputs on the 1/255 grid). SAD ties prefer the smallest (|dy|,|dx|), then
// the first candidate in row-major (dy,dx) order.
CompressedVideo encode(const RawVideo& video, int gop_size = kDefaultGopSize,
                       int block_size = kDefaultBlockSize,
                       int search_range = kDefaultSearchRange);

RawVideo decode(const CompressedVideo& cv);

// Samples n GOP indices as floor(k*G/n) and pairs each I-frame with its GOP's
// residual signal. first_pframe maps the first residual via r -> (r+1)/2;
// gop_accumulated uses the elementwise mean of |r| over the GOP. GOPs with no
// P-frames contribute an all-0.5 residual frame in either mode.
FrameStack sample_frame_stack(const CompressedVideo& cv, int n,
                              ResidualMode mode = ResidualMode::first_pframe);

std::string serialize(const CompressedVideo& cv);
CompressedVideo deserialize(const std::string& bytes, const std::string& origin = "<memory>");

void write_stream_file(const std::string& path, const CompressedVideo& cv);
CompressedVideo read_stream_file(const std::string& path);

}  // namespace resicap::codec
