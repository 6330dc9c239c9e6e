#include "nwf/codec.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <memory>

#include "nwf/prior.hpp"
#include "nwf/rans.hpp"
#include "nwf/wire.hpp"

namespace nwf {

// ---------------------------------------------------------------------------
// support-bound grid

namespace {

constexpr long kMaxBoundMagnitude = 8191;

long grid_mag(int code) {
  if (code <= 63) return code;
  if (code <= 95) return 64 + (code - 64) * 4;
  if (code <= 119) return 192 + (code - 96) * 16;
  if (code <= 126) return 576 + (code - 120) * 1024;
  return kMaxBoundMagnitude;
}

int grid_ceil_code(long mag) {  // smallest code with grid_mag >= mag
  require(mag <= kMaxBoundMagnitude, Errc::numeric,
          "coefficient outside codable range (|v| > 8191)");
  for (int c = 0; c < 128; ++c)
    if (grid_mag(c) >= mag) return c;
  return 127;
}

int grid_floor_code(long mag) {  // largest code with grid_mag <= mag
  int c = 0;
  while (c + 1 < 128 && grid_mag(c + 1) <= mag) ++c;
  return c;
}

}  // namespace

long bound_grid_value(uint8_t code) {
  long mag = grid_mag(code & 0x7f);
  return (code & 0x80) ? -mag : mag;
}

uint8_t encode_bound_lo(long v) {
  if (v >= 0) return static_cast<uint8_t>(grid_floor_code(v));
  return static_cast<uint8_t>(0x80 | grid_ceil_code(-v));
}

uint8_t encode_bound_hi(long v) {
  if (v >= 0) return static_cast<uint8_t>(grid_ceil_code(v));
  return static_cast<uint8_t>(0x80 | grid_floor_code(-v));
}

// ---------------------------------------------------------------------------
// container header

std::vector<uint8_t> ContainerHeader::serialize() const {
  ByteWriter w;
  w.tag("NWF1");
  w.u16(version);
  w.u16(width);
  w.u16(height);
  w.u8(channels);
  w.u8(static_cast<uint8_t>(colorspace));
  w.u8(scheme);
  w.u8(iterations);
  w.u64(model_hash);
  w.u32(payload_len);
  require(plane_bounds.size() == static_cast<size_t>(3 * iterations + 1), Errc::contract,
          "header: bound count mismatch");
  for (const auto& [lo, hi] : plane_bounds) {
    w.u8(encode_bound_lo(lo));
    w.u8(encode_bound_hi(hi));
  }
  return std::move(w.bytes);
}

ContainerHeader ContainerHeader::parse(std::span<const uint8_t> bytes, size_t* header_len) {
  ByteReader r{bytes};
  r.expect_tag("NWF1");
  ContainerHeader h;
  h.version = r.u16();
  require(h.version == 1, Errc::format, "container: unsupported version");
  h.width = r.u16();
  h.height = r.u16();
  h.channels = r.u8();
  uint8_t cs = r.u8();
  require(cs <= 1, Errc::format, "container: bad colorspace flag");
  h.colorspace = static_cast<Colorspace>(cs);
  h.scheme = r.u8();
  h.iterations = r.u8();
  h.model_hash = r.u64();
  h.payload_len = r.u32();
  for (int i = 0; i < 3 * h.iterations + 1; ++i) {
    long lo = bound_grid_value(r.u8());
    long hi = bound_grid_value(r.u8());
    require(lo <= hi, Errc::format, "container: inverted plane bounds");
    h.plane_bounds.push_back({lo, hi});
  }
  if (header_len) *header_len = r.pos;
  return h;
}

// ---------------------------------------------------------------------------
// tensor <-> image

Tensor image_to_tensor(const ImageU8& img) {
  require(img.valid(), Errc::contract, "image_to_tensor: invalid image");
  std::vector<float> v(img.data.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(img.data[i]);
  return Tensor::from_values({img.channels, img.height, img.width}, std::move(v));
}

ImageU8 tensor_to_image_clamped(const Tensor& t) {
  require(t.rank() == 3, Errc::contract, "tensor_to_image: expects [C,H,W]");
  ImageU8 img(t.dim(2), t.dim(1), t.dim(0));
  const auto& v = t.values();
  for (size_t i = 0; i < v.size(); ++i) {
    long r = std::lround(v[i]);
    img.data[i] = static_cast<uint8_t>(std::min(255l, std::max(0l, r)));
  }
  return img;
}

// ---------------------------------------------------------------------------
// symbol planning (shared by compress / bpd_theoretical / decompress)

namespace {

std::vector<long> plane_ints(const Tensor& t) {
  std::vector<long> out(t.numel());
  const auto& v = t.values();
  for (size_t i = 0; i < v.size(); ++i) {
    require(std::fabs(v[i] - std::nearbyint(v[i])) < 0.5f, Errc::numeric,
            "coder: non-integer coefficient");
    out[i] = std::lround(v[i]);
  }
  return out;
}

std::pair<long, long> data_bounds(const std::vector<long>& vals) {
  long lo = vals[0], hi = vals[0];
  for (long v : vals) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

// Round data bounds outward onto the grid; the decoded grid values are the
// authoritative support for both sides.
std::pair<long, long> grid_bounds(const std::vector<long>& vals) {
  auto [lo, hi] = data_bounds(vals);
  long glo = bound_grid_value(encode_bound_lo(lo));
  long ghi = bound_grid_value(encode_bound_hi(hi));
  return {glo, ghi};
}

// Table provider; caches logistic tables by the exact (quantized params,
// support) tuple, which is what both coder sides derive.
class TableSet {
 public:
  explicit TableSet(int precision_bits) : precision_(precision_bits) {}

  const FrequencyTable* logistic(double mu_q, double log_s_q, long lo, long hi) {
    std::array<long, 4> key = {std::lround(mu_q * 64.0), std::lround(log_s_q * 32.0), lo, hi};
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto pmf = dl_pmf_table(mu_q, log_s_q, lo, hi);
    tables_.push_back(build_table(pmf, lo, precision_));
    cache_[key] = &tables_.back();
    return &tables_.back();
  }

  const FrequencyTable* mixture(const MixtureParams& mix, long lo, long hi) {
    auto pmf = mixture_pmf_table(mix, lo, hi);
    tables_.push_back(build_table(pmf, lo, precision_));
    return &tables_.back();
  }

 private:
  int precision_;
  std::deque<FrequencyTable> tables_;
  std::map<std::array<long, 4>, const FrequencyTable*> cache_;
};

MixtureParams mixture_for_channel(const Priors& priors, int c) {
  int k = priors.mixture_k();
  MixtureParams mix;
  mix.log_pi.resize(k);
  mix.mu.resize(k);
  mix.log_s.resize(k);
  const auto& logits = priors.final_logits.values();
  double mx = -1e30;
  for (int j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(logits[c * k + j]));
  double s = 0.0;
  for (int j = 0; j < k; ++j) s += std::exp(static_cast<double>(logits[c * k + j]) - mx);
  double lse = mx + std::log(s);
  for (int j = 0; j < k; ++j) {
    mix.log_pi[j] = static_cast<double>(logits[c * k + j]) - lse;
    mix.mu[j] = quantize_mu(priors.final_mu.values()[c * k + j]);
    mix.log_s[j] = quantize_log_s(priors.final_log_s.values()[c * k + j]);
  }
  return mix;
}

// Quantized factor-prior parameters for quadrant slot q, channel c.
std::pair<double, double> factor_params(const Priors& priors, int q, int c) {
  int ch = priors.channels();
  double mu = quantize_mu(priors.factor_mu.values()[q * ch + c]);
  double ls = quantize_log_s(priors.factor_log_s.values()[q * ch + c]);
  return {mu, ls};
}

// Conditional maps, quantized, as doubles in plane layout [3C,h,w].
struct QuantMaps {
  std::vector<double> mu, log_s;
};

QuantMaps quantized_maps(const Tensor& low, const ConvNet& net) {
  NoGradGuard ng;
  PriorMaps maps = prior_eval(low, net);
  QuantMaps q;
  q.mu.resize(maps.mu.numel());
  q.log_s.resize(maps.log_s.numel());
  for (size_t i = 0; i < q.mu.size(); ++i) {
    q.mu[i] = quantize_mu(maps.mu.values()[i]);
    q.log_s[i] = quantize_log_s(maps.log_s.values()[i]);
  }
  return q;
}

// A plane's symbols in scan order with their tables and ideal log2 pmf.
struct PlanOut {
  std::vector<StreamSymbol> symbols;  // decode order
  double ideal_bits = 0.0;            // sum of -log2 pmf
};

void plan_final_block(const Tensor& final_block, const Priors& priors, long lo, long hi,
                      TableSet& tables, PlanOut& out) {
  auto vals = plane_ints(final_block);
  int c = final_block.dim(0);
  size_t plane = vals.size() / static_cast<size_t>(c);
  for (int ch = 0; ch < c; ++ch) {
    MixtureParams mix = mixture_for_channel(priors, ch);
    const FrequencyTable* t = tables.mixture(mix, lo, hi);
    for (size_t i = 0; i < plane; ++i) {
      long z = vals[ch * plane + i];
      require(z >= lo && z <= hi, Errc::numeric, "coder: final value outside bounds");
      out.symbols.push_back({z, t});
      out.ideal_bits -= mixture_log_pmf(z, mix, lo, hi) / std::log(2.0);
    }
  }
}

void plan_level_planes(const LatentPyramid::Level& level, const Priors& priors,
                       std::span<const std::pair<long, long>> bounds3, TableSet& tables,
                       PlanOut& out) {
  int c = priors.channels();
  QuantMaps maps;
  if (priors.use_net) {
    maps = quantized_maps(level.low, priors.net);
  }
  for (int q = 0; q < 3; ++q) {
    auto [lo, hi] = bounds3[q];
    auto vals = plane_ints(level.planes[q]);
    size_t plane = vals.size() / static_cast<size_t>(c);
    for (int ch = 0; ch < c; ++ch) {
      if (!priors.use_net) {
        auto [mu, ls] = factor_params(priors, q, ch);
        const FrequencyTable* t = tables.logistic(mu, ls, lo, hi);
        for (size_t i = 0; i < plane; ++i) {
          long z = vals[ch * plane + i];
          require(z >= lo && z <= hi, Errc::numeric, "coder: coefficient outside bounds");
          out.symbols.push_back({z, t});
          out.ideal_bits -= dl_log_pmf(z, mu, ls, lo, hi) / std::log(2.0);
        }
      } else {
        size_t map_off = (static_cast<size_t>(q) * c + ch) * plane;
        for (size_t i = 0; i < plane; ++i) {
          long z = vals[ch * plane + i];
          require(z >= lo && z <= hi, Errc::numeric, "coder: coefficient outside bounds");
          double mu = maps.mu[map_off + i];
          double ls = maps.log_s[map_off + i];
          const FrequencyTable* t = tables.logistic(mu, ls, lo, hi);
          out.symbols.push_back({z, t});
          out.ideal_bits -= dl_log_pmf(z, mu, ls, lo, hi) / std::log(2.0);
        }
      }
    }
  }
}

struct PyramidPlan {
  std::vector<std::pair<long, long>> bounds;  // decode order
  PlanOut plan;
  std::unique_ptr<TableSet> tables;
};

PyramidPlan plan_pyramid(const LatentPyramid& pyr, const Model& model) {
  PyramidPlan pp;
  pp.tables = std::make_unique<TableSet>(kRansPrecisionBits);
  // bounds in decode order: final, then levels deepest to finest
  pp.bounds.push_back(grid_bounds(plane_ints(pyr.final_block)));
  for (size_t i = pyr.levels.size(); i-- > 0;)
    for (int q = 0; q < 3; ++q)
      pp.bounds.push_back(grid_bounds(plane_ints(pyr.levels[i].planes[q])));

  plan_final_block(pyr.final_block, model.priors, pp.bounds[0].first, pp.bounds[0].second,
                   *pp.tables, pp.plan);
  size_t bi = 1;
  for (size_t i = pyr.levels.size(); i-- > 0;) {
    plan_level_planes(pyr.levels[i], model.priors,
                      std::span(pp.bounds).subspan(bi, 3), *pp.tables, pp.plan);
    bi += 3;
  }
  return pp;
}

LatentPyramid forward_integer(const ImageU8& image, const Model& model) {
  NoGradGuard ng;
  WaveletFlow flow = model.flow;
  flow.integer_mode = true;
  return wavelet_forward(image_to_tensor(image), flow);
}

void validate_image_for_model(const ImageU8& image, const Model& model) {
  require(image.valid(), Errc::contract, "codec: invalid image");
  require(image.channels == model.channels, Errc::model,
          "codec: image channel count does not match model");
  require(is_power_of_two(image.width) && is_power_of_two(image.height), Errc::contract,
          "codec: extents must be powers of two");
  require(image.width >= 2 && image.height >= 2, Errc::contract, "codec: extents must be >= 2");
  require(image.width <= 32768 && image.height <= 32768, Errc::contract,
          "codec: extent too large");
}

}  // namespace

// ---------------------------------------------------------------------------
// compress / decompress

std::vector<uint8_t> compress(const ImageU8& image, const Model& model, CompressOptions opt) {
  validate_image_for_model(image, model);
  ImageU8 coded = image;
  if (opt.ycbcr) {
    require(image.channels == 3, Errc::contract, "compress: --ycbcr needs 3 channels");
    coded = rgb_to_ycbcr(image);
  }
  LatentPyramid pyr = forward_integer(coded, model);
  PyramidPlan pp = plan_pyramid(pyr, model);
  std::vector<uint8_t> payload = encode_stream(pp.plan.symbols);

  ContainerHeader h;
  h.width = static_cast<uint16_t>(image.width);
  h.height = static_cast<uint16_t>(image.height);
  h.channels = static_cast<uint8_t>(image.channels);
  h.colorspace = opt.ycbcr ? Colorspace::YCbCr : Colorspace::RGB;
  h.scheme = static_cast<uint8_t>(model.scheme());
  h.iterations = static_cast<uint8_t>(pyr.levels.size());
  h.model_hash = model_hash(model);
  h.payload_len = static_cast<uint32_t>(payload.size());
  h.plane_bounds = pp.bounds;

  std::vector<uint8_t> out = h.serialize();
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

namespace {

// Shared decode loop; stops after `levels` refinements when partial.
struct DecodeResult {
  Tensor low;
  ContainerHeader header;
  size_t consumed_payload = 0;
};

std::vector<long> decode_plane_uncond(RansDecoder& dec, TableSet& tables, const Priors& priors,
                                      int q, int c, size_t plane, long lo, long hi) {
  std::vector<long> vals(static_cast<size_t>(c) * plane);
  for (int ch = 0; ch < c; ++ch) {
    auto [mu, ls] = factor_params(priors, q, ch);
    const FrequencyTable* t = tables.logistic(mu, ls, lo, hi);
    for (size_t i = 0; i < plane; ++i) vals[ch * plane + i] = lo + static_cast<long>(dec.get(*t));
  }
  return vals;
}

Tensor ints_to_tensor(const std::vector<long>& vals, std::vector<int> shape) {
  std::vector<float> v(vals.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(vals[i]);
  return Tensor::from_values(std::move(shape), std::move(v));
}

DecodeResult decode_stream(std::span<const uint8_t> bytes, const Model& model, int levels,
                           bool partial) {
  size_t header_len = 0;
  ContainerHeader h = ContainerHeader::parse(bytes, &header_len);
  require(h.model_hash == model_hash(model), Errc::model,
          "decompress: container was written with a different model");
  require(h.channels == model.channels, Errc::model, "decompress: channel mismatch");
  require(h.scheme == static_cast<uint8_t>(model.scheme()), Errc::model,
          "decompress: scheme mismatch");
  require(is_power_of_two(h.width) && is_power_of_two(h.height), Errc::format,
          "decompress: bad extents");
  int iters = num_iterations(h.width, h.height);
  require(iters == h.iterations, Errc::format, "decompress: iteration count mismatch");
  require(levels >= 0 && levels <= iters, Errc::contract,
          "decompress: levels beyond iteration count");

  std::span<const uint8_t> payload = bytes.subspan(header_len);
  if (!partial)
    require(payload.size() >= h.payload_len, Errc::decode, "decompress: truncated payload");
  if (payload.size() > h.payload_len) payload = payload.first(h.payload_len);

  NoGradGuard ng;
  RansDecoder dec(payload);
  TableSet tables(kRansPrecisionBits);
  int c = model.channels;

  // final block geometry after `iters` halvings
  int fh = h.height >> iters, fw = h.width >> iters;
  auto [flo, fhi] = h.plane_bounds[0];
  std::vector<long> fvals(static_cast<size_t>(c) * fh * fw);
  size_t fplane = static_cast<size_t>(fh) * fw;
  for (int ch = 0; ch < c; ++ch) {
    MixtureParams mix = mixture_for_channel(model.priors, ch);
    const FrequencyTable* t = tables.mixture(mix, flo, fhi);
    for (size_t i = 0; i < fplane; ++i) fvals[ch * fplane + i] = flo + static_cast<long>(dec.get(*t));
  }
  Tensor cur = ints_to_tensor(fvals, {c, fh, fw});

  // refinements, deepest first
  for (int step = 0; step < levels; ++step) {
    size_t bi = 1 + static_cast<size_t>(step) * 3;
    int ph = cur.dim(1), pw = cur.dim(2);
    size_t plane = static_cast<size_t>(ph) * pw;
    std::array<Tensor, 3> planes;
    if (!model.priors.use_net) {
      for (int q = 0; q < 3; ++q) {
        auto [lo, hi] = h.plane_bounds[bi + q];
        planes[q] = ints_to_tensor(
            decode_plane_uncond(dec, tables, model.priors, q, c, plane, lo, hi), {c, ph, pw});
      }
    } else {
      QuantMaps maps = quantized_maps(cur, model.priors.net);
      for (int q = 0; q < 3; ++q) {
        auto [lo, hi] = h.plane_bounds[bi + q];
        std::vector<long> vals(static_cast<size_t>(c) * plane);
        for (int ch = 0; ch < c; ++ch) {
          size_t map_off = (static_cast<size_t>(q) * c + ch) * plane;
          for (size_t i = 0; i < plane; ++i) {
            const FrequencyTable* t =
                tables.logistic(maps.mu[map_off + i], maps.log_s[map_off + i], lo, hi);
            vals[ch * plane + i] = lo + static_cast<long>(dec.get(*t));
          }
        }
        planes[q] = ints_to_tensor(vals, {c, ph, pw});
      }
    }
    cur = invert_one_level(cur, planes, model.flow.block, /*integer=*/true);
  }

  DecodeResult res;
  res.low = cur;
  res.header = h;
  res.consumed_payload = dec.consumed();
  return res;
}

}  // namespace

ImageU8 decompress(std::span<const uint8_t> bytes, const Model& model) {
  size_t header_len = 0;
  ContainerHeader h = ContainerHeader::parse(bytes, &header_len);
  DecodeResult res = decode_stream(bytes, model, h.iterations, /*partial=*/false);
  for (float v : res.low.values())
    require(v >= 0.0f && v <= 255.0f, Errc::decode, "decompress: value outside u8 range");
  ImageU8 img = tensor_to_image_clamped(res.low);
  if (res.header.colorspace == Colorspace::YCbCr) img = ycbcr_to_rgb(img);
  return img;
}

ImageU8 progressive_decode(std::span<const uint8_t> bytes, const Model& model, int levels) {
  DecodeResult res = decode_stream(bytes, model, levels, /*partial=*/true);
  ImageU8 img = tensor_to_image_clamped(res.low);
  if (res.header.colorspace == Colorspace::YCbCr && img.channels == 3) img = ycbcr_to_rgb(img);
  return img;
}

size_t progressive_prefix_bytes(std::span<const uint8_t> bytes, const Model& model, int levels) {
  DecodeResult res = decode_stream(bytes, model, levels, /*partial=*/true);
  return res.consumed_payload;
}

// ---------------------------------------------------------------------------
// rate metrics

double bpd_theoretical(const ImageU8& image, const Model& model, CompressOptions opt) {
  validate_image_for_model(image, model);
  ImageU8 coded = image;
  if (opt.ycbcr) coded = rgb_to_ycbcr(image);
  LatentPyramid pyr = forward_integer(coded, model);
  PyramidPlan pp = plan_pyramid(pyr, model);
  double dims = static_cast<double>(image.pixel_count()) * image.channels;
  return pp.plan.ideal_bits / dims;
}

double bpd_actual(const ImageU8& image, const Model& model, CompressOptions opt) {
  auto bytes = compress(image, model, opt);
  double dims = static_cast<double>(image.pixel_count()) * image.channels;
  return 8.0 * static_cast<double>(bytes.size()) / dims;
}

// ---------------------------------------------------------------------------
// super-resolution sampling

ImageU8 upsample(const ImageU8& image, const Model& model, int factor, uint64_t seed) {
  validate_image_for_model(image, model);
  require(factor >= 2 && is_power_of_two(factor), Errc::contract,
          "upsample: factor must be a power of two >= 2");
  NoGradGuard ng;
  std::mt19937_64 rng(seed);
  constexpr long kLo = -32768, kHi = 32767;
  Tensor cur = image_to_tensor(image);
  int c = model.channels;
  for (int f = factor; f > 1; f /= 2) {
    int ph = cur.dim(1), pw = cur.dim(2);
    size_t plane = static_cast<size_t>(ph) * pw;
    std::array<Tensor, 3> planes;
    if (!model.priors.use_net) {
      for (int q = 0; q < 3; ++q) {
        std::vector<long> vals(static_cast<size_t>(c) * plane);
        for (int ch = 0; ch < c; ++ch) {
          auto [mu, ls] = factor_params(model.priors, q, ch);
          for (size_t i = 0; i < plane; ++i) vals[ch * plane + i] = dl_sample(mu, ls, kLo, kHi, rng);
        }
        planes[q] = ints_to_tensor(vals, {c, ph, pw});
      }
    } else {
      QuantMaps maps = quantized_maps(cur, model.priors.net);
      for (int q = 0; q < 3; ++q) {
        std::vector<long> vals(static_cast<size_t>(c) * plane);
        for (int ch = 0; ch < c; ++ch) {
          size_t off = (static_cast<size_t>(q) * c + ch) * plane;
          for (size_t i = 0; i < plane; ++i)
            vals[ch * plane + i] = dl_sample(maps.mu[off + i], maps.log_s[off + i], kLo, kHi, rng);
        }
        planes[q] = ints_to_tensor(vals, {c, ph, pw});
      }
    }
    cur = invert_one_level(cur, planes, model.flow.block, /*integer=*/true);
  }
  return tensor_to_image_clamped(cur);
}

}  // namespace nwf
