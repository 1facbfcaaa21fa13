#include "resicap/codec.hpp"

#include <algorithm>
#include <climits>
#include <cstdlib>

#include "resicap/wire.hpp"

namespace resicap::codec {

namespace {

using U8Frame = std::vector<int>;  // u8 samples widened to int

void validate_for_encode(const RawVideo& v, int gop_size, int block_size, int search_range) {
  if (gop_size < 1) throw ConfigError("encode: gop_size must be >= 1");
  if (block_size < 1) throw ConfigError("encode: block_size must be >= 1");
  if (search_range < 0) throw ConfigError("encode: search_range must be >= 0");
  if (search_range > 127) {
    throw ConfigError("encode: search_range > 127 does not fit the i8 wire format");
  }
  if (v.frames.empty()) throw InputError("encode: empty video");
  if (v.channels != 1 && v.channels != 3) {
    throw InputError("encode: channels must be 1 or 3, got " + std::to_string(v.channels));
  }
  if (v.height < 1 || v.width < 1) throw InputError("encode: non-positive frame dimensions");
  if (v.height % block_size != 0 || v.width % block_size != 0) {
    throw ConfigError("encode: frame dims " + std::to_string(v.height) + "x" +
                      std::to_string(v.width) + " not divisible by block_size " +
                      std::to_string(block_size));
  }
  const std::size_t expect = static_cast<std::size_t>(v.height) * v.width * v.channels;
  for (const auto& f : v.frames) {
    if (f.size() != expect) throw InputError("encode: frame size does not match video dims");
    for (double p : f) {
      if (!(p >= 0.0 && p <= 1.0)) throw InputError("encode: pixel outside [0,1]");
    }
  }
}

U8Frame quantize(const std::vector<double>& frame) {
  U8Frame out(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) out[i] = unit_to_u8(frame[i]);
  return out;
}

std::vector<double> dequantize(const U8Frame& frame) {
  std::vector<double> out(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) out[i] = u8_to_unit(frame[i]);
  return out;
}

// Sum of absolute differences between the current block and the reference
// block at (ry, rx), with early exit once `bound` is exceeded.
long block_sad(const U8Frame& cur, const U8Frame& ref, int W, int C, int bs, int cy, int cx,
               int ry, int rx, long bound) {
  long sad = 0;
  for (int y = 0; y < bs; ++y) {
    const int* a = cur.data() + ((cy + y) * W + cx) * C;
    const int* b = ref.data() + ((ry + y) * W + rx) * C;
    for (int i = 0; i < bs * C; ++i) sad += std::abs(a[i] - b[i]);
    if (sad > bound) return sad;
  }
  return sad;
}

}  // namespace

CompressedVideo encode(const RawVideo& video, int gop_size, int block_size, int search_range) {
  validate_for_encode(video, gop_size, block_size, search_range);
  const int H = video.height, W = video.width, C = video.channels, bs = block_size;
  const int grid_h = H / bs, grid_w = W / bs;

  CompressedVideo cv;
  cv.header = {H, W, C, bs, search_range, gop_size};

  std::vector<U8Frame> frames;
  frames.reserve(video.frames.size());
  for (const auto& f : video.frames) frames.push_back(quantize(f));

  for (std::size_t start = 0; start < frames.size(); start += gop_size) {
    const std::size_t end = std::min(frames.size(), start + gop_size);
    Gop gop;
    gop.iframe = dequantize(frames[start]);
    U8Frame ref = frames[start];
    for (std::size_t fi = start + 1; fi < end; ++fi) {
      const U8Frame& cur = frames[fi];
      PFrame pf;
      pf.motion_vectors.reserve(static_cast<std::size_t>(grid_h) * grid_w);
      pf.residual.assign(static_cast<std::size_t>(H) * W * C, 0.0);
      U8Frame recon(cur.size());
      for (int by = 0; by < grid_h; ++by) {
        for (int bx = 0; bx < grid_w; ++bx) {
          const int cy = by * bs, cx = bx * bs;
          long best_sad = -1;
          int best_dy = 0, best_dx = 0;
          for (int dy = -search_range; dy <= search_range; ++dy) {
            const int ry = cy + dy;
            if (ry < 0 || ry + bs > H) continue;
            for (int dx = -search_range; dx <= search_range; ++dx) {
              const int rx = cx + dx;
              if (rx < 0 || rx + bs > W) continue;
              const long bound = best_sad < 0 ? LONG_MAX : best_sad;
              const long sad = block_sad(cur, ref, W, C, bs, cy, cx, ry, rx, bound);
              const bool better =
                  best_sad < 0 || sad < best_sad ||
                  (sad == best_sad && std::make_pair(std::abs(dy), std::abs(dx)) <
                                          std::make_pair(std::abs(best_dy), std::abs(best_dx)));
              if (better) {
                best_sad = sad;
                best_dy = dy;
                best_dx = dx;
              }
            }
          }
          pf.motion_vectors.emplace_back(best_dy, best_dx);
          // Exact residual against the motion-compensated prediction; the
          // reconstruction therefore equals the source frame.
          for (int y = 0; y < bs; ++y) {
            for (int x = 0; x < bs * C; ++x) {
              const std::size_t ci = (static_cast<std::size_t>(cy + y) * W + cx) * C + x;
              const std::size_t ri = (static_cast<std::size_t>(cy + best_dy + y) * W + cx + best_dx) * C + x;
              const int diff = cur[ci] - ref[ri];
              pf.residual[ci] = static_cast<double>(diff) / 255.0;
              recon[ci] = ref[ri] + diff;
            }
          }
        }
      }
      gop.pframes.push_back(std::move(pf));
      ref = std::move(recon);
    }
    cv.gops.push_back(std::move(gop));
  }
  return cv;
}

RawVideo decode(const CompressedVideo& cv) {
  const int H = cv.header.height, W = cv.header.width, C = cv.header.channels;
  const int bs = cv.header.block_size;
  if (H < 1 || W < 1 || bs < 1 || H % bs != 0 || W % bs != 0 || (C != 1 && C != 3)) {
    throw CorruptStreamError("decode: malformed header");
  }
  const int grid_h = H / bs, grid_w = W / bs;
  const std::size_t frame_len = static_cast<std::size_t>(H) * W * C;

  RawVideo out;
  out.height = H;
  out.width = W;
  out.channels = C;
  for (const auto& gop : cv.gops) {
    if (gop.iframe.size() != frame_len) throw CorruptStreamError("decode: I-frame size mismatch");
    U8Frame ref = quantize(gop.iframe);
    out.frames.push_back(dequantize(ref));
    for (const auto& pf : gop.pframes) {
      if (pf.motion_vectors.size() != static_cast<std::size_t>(grid_h) * grid_w ||
          pf.residual.size() != frame_len) {
        throw CorruptStreamError("decode: P-frame payload size mismatch");
      }
      U8Frame recon(frame_len);
      for (int by = 0; by < grid_h; ++by) {
        for (int bx = 0; bx < grid_w; ++bx) {
          const auto [dy, dx] = pf.motion_vectors[by * grid_w + bx];
          const int ry = by * bs + dy, rx = bx * bs + dx;
          if (ry < 0 || ry + bs > H || rx < 0 || rx + bs > W) {
            throw CorruptStreamError("decode: motion vector outside reference frame");
          }
          for (int y = 0; y < bs; ++y) {
            for (int x = 0; x < bs * C; ++x) {
              const std::size_t ci = (static_cast<std::size_t>(by * bs + y) * W + bx * bs) * C + x;
              const std::size_t ri = (static_cast<std::size_t>(ry + y) * W + rx) * C + x;
              const int v = ref[ri] + unit_to_u8(pf.residual[ci]);
              if (v < 0 || v > 255) {
                throw CorruptStreamError("decode: reconstructed sample outside [0,255]");
              }
              recon[ci] = v;
            }
          }
        }
      }
      out.frames.push_back(dequantize(recon));
      ref = std::move(recon);
    }
  }
  return out;
}

FrameStack sample_frame_stack(const CompressedVideo& cv, int n, ResidualMode mode) {
  if (n < 1) throw ConfigError("sample_frame_stack: sample count must be >= 1");
  if (cv.gops.empty()) throw InputError("sample_frame_stack: video has no GOPs");
  const std::size_t G = cv.gops.size();
  const std::size_t frame_len =
      static_cast<std::size_t>(cv.header.height) * cv.header.width * cv.header.channels;

  FrameStack fs;
  fs.height = cv.header.height;
  fs.width = cv.header.width;
  fs.channels = cv.header.channels;
  for (int k = 0; k < n; ++k) {
    const std::size_t gi = static_cast<std::size_t>(k) * G / static_cast<std::size_t>(n);
    const Gop& gop = cv.gops[gi];
    fs.p_i.push_back(gop.iframe);
    std::vector<double> pr(frame_len, 0.5);  // zero-signal default
    if (!gop.pframes.empty()) {
      if (mode == ResidualMode::first_pframe) {
        const auto& r = gop.pframes[0].residual;
        for (std::size_t i = 0; i < frame_len; ++i) pr[i] = (r[i] + 1.0) / 2.0;
      } else {
        std::fill(pr.begin(), pr.end(), 0.0);
        for (const auto& pf : gop.pframes) {
          for (std::size_t i = 0; i < frame_len; ++i) pr[i] += std::fabs(pf.residual[i]);
        }
        for (double& v : pr) v /= static_cast<double>(gop.pframes.size());
      }
    }
    fs.p_r.push_back(std::move(pr));
  }
  return fs;
}

std::string serialize(const CompressedVideo& cv) {
  const auto& h = cv.header;
  auto fits_u16 = [](int v) { return v >= 0 && v <= 65535; };
  if (!fits_u16(h.height) || !fits_u16(h.width) || !fits_u16(h.channels) ||
      !fits_u16(h.block_size) || !fits_u16(h.search_range) || !fits_u16(h.gop_size)) {
    throw InputError("serialize: header field out of u16 range");
  }
  wire::Writer w;
  w.magic("TGOP");
  w.u16(kStreamVersion);
  w.u16(static_cast<std::uint16_t>(h.height));
  w.u16(static_cast<std::uint16_t>(h.width));
  w.u16(static_cast<std::uint16_t>(h.channels));
  w.u16(static_cast<std::uint16_t>(h.block_size));
  w.u16(static_cast<std::uint16_t>(h.search_range));
  w.u16(static_cast<std::uint16_t>(h.gop_size));
  w.u32(static_cast<std::uint32_t>(cv.gops.size()));
  for (const auto& gop : cv.gops) {
    w.u16(static_cast<std::uint16_t>(gop.pframes.size()));
    for (double p : gop.iframe) w.u8(static_cast<std::uint8_t>(unit_to_u8(p)));
    for (const auto& pf : gop.pframes) {
      for (auto [dy, dx] : pf.motion_vectors) {
        w.i8(static_cast<std::int8_t>(dy));
        w.i8(static_cast<std::int8_t>(dx));
      }
      for (double r : pf.residual) w.i16(static_cast<std::int16_t>(unit_to_u8(r)));
    }
  }
  return w.buffer();
}

CompressedVideo deserialize(const std::string& bytes, const std::string& origin) {
  wire::Reader r(bytes, origin);
  r.magic("TGOP");
  const std::uint16_t version = r.u16();
  if (version != kStreamVersion) {
    throw VersionError(origin + ": unsupported bitstream version " + std::to_string(version));
  }
  CompressedVideo cv;
  cv.header.height = r.u16();
  cv.header.width = r.u16();
  cv.header.channels = r.u16();
  cv.header.block_size = r.u16();
  cv.header.search_range = r.u16();
  cv.header.gop_size = r.u16();
  const auto& h = cv.header;
  if (h.height < 1 || h.width < 1 || h.block_size < 1 || (h.channels != 1 && h.channels != 3) ||
      h.gop_size < 1 || h.height % h.block_size != 0 || h.width % h.block_size != 0) {
    throw CorruptStreamError(origin + ": malformed stream header");
  }
  const std::size_t frame_len = static_cast<std::size_t>(h.height) * h.width * h.channels;
  const std::size_t blocks =
      static_cast<std::size_t>(h.height / h.block_size) * (h.width / h.block_size);
  const std::uint32_t gop_count = r.u32();
  for (std::uint32_t g = 0; g < gop_count; ++g) {
    const std::uint16_t pframes = r.u16();
    if (pframes + 1 > h.gop_size) {
      throw CorruptStreamError(origin + ": GOP longer than header gop_size");
    }
    Gop gop;
    gop.iframe.resize(frame_len);
    for (double& p : gop.iframe) p = u8_to_unit(r.u8());
    for (std::uint16_t pi = 0; pi < pframes; ++pi) {
      PFrame pf;
      pf.motion_vectors.reserve(blocks);
      for (std::size_t b = 0; b < blocks; ++b) {
        const int dy = r.i8();
        const int dx = r.i8();
        pf.motion_vectors.emplace_back(dy, dx);
      }
      pf.residual.resize(frame_len);
      for (double& v : pf.residual) {
        const int d = r.i16();
        if (d < -255 || d > 255) {
          throw CorruptStreamError(origin + ": residual sample outside [-255,255]");
        }
        v = static_cast<double>(d) / 255.0;
      }
      gop.pframes.push_back(std::move(pf));
    }
    cv.gops.push_back(std::move(gop));
  }
  r.expect_end();
  return cv;
}

void write_stream_file(const std::string& path, const CompressedVideo& cv) {
  wire::Writer w;
  const std::string payload = serialize(cv);
  w.bytes(payload.data(), payload.size());
  w.to_file(path);
}

CompressedVideo read_stream_file(const std::string& path) {
  wire::Reader r = wire::Reader::from_file(path);
  const std::size_t n = r.remaining();
  return deserialize(r.bytes(n), path);
}

}  // namespace resicap::codec
