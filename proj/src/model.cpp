#include "nwf/model.hpp"

#include <fstream>

#include "nwf/wire.hpp"

namespace nwf {

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> ps = flow.block.parameters();
  for (const auto& p : priors.parameters()) ps.push_back(p);
  return ps;
}

Model make_model(Scheme scheme, int channels, int repeat, int n_hidden, int hidden_channel,
                 int mixture_k, bool prior_net, WaveletInit init, uint64_t seed) {
  require(channels == 1 || channels == 3, Errc::contract, "make_model: channels must be 1 or 3");
  Model m;
  m.channels = channels;
  m.repeat = repeat;
  m.n_hidden = n_hidden;
  m.hidden_channel = hidden_channel;
  m.mixture_k = mixture_k;
  m.prior_net = prior_net;
  m.flow.block = make_block(scheme, channels, repeat, hidden_channel, n_hidden);
  m.flow.integer_mode = true;
  switch (init) {
    case WaveletInit::Zero:
      break;
    case WaveletInit::Haar:
      require(scheme == Scheme::OneD, Errc::contract, "haar init needs scheme 1");
      init_haar(m.flow.block);
      break;
    case WaveletInit::LeGall:
      require(scheme == Scheme::OneD, Errc::contract, "legall init needs scheme 1");
      init_legall(m.flow.block);
      break;
    case WaveletInit::Random:
      for (size_t i = 0; i < m.flow.block.nets.size(); ++i)
        randomize_net(m.flow.block.nets[i], seed * 0x100 + i, /*zero_last=*/false);
      break;
  }
  m.priors = make_priors(scheme, channels, mixture_k, prior_net, hidden_channel, n_hidden);
  return m;
}

namespace {

void write_net(ByteWriter& w, const ConvNet& net) {
  w.u16(static_cast<uint16_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    w.u8(static_cast<uint8_t>(l.dims));
    w.u16(static_cast<uint16_t>(l.in_channels));
    w.u16(static_cast<uint16_t>(l.out_channels));
    w.u8(static_cast<uint8_t>(l.kernel_size));
    w.u8(static_cast<uint8_t>(l.padding_mode));
    for (float v : l.weights.values()) w.f32(v);
    for (float v : l.bias.values()) w.f32(v);
  }
}

ConvNet read_net(ByteReader& r, bool norm_input, float out_scale) {
  ConvNet net;
  net.norm_input = norm_input;
  net.out_scale = out_scale;
  int layers = r.u16();
  require(layers >= 1 && layers <= 64, Errc::format, "model: bad layer count");
  for (int i = 0; i < layers; ++i) {
    int dims = r.u8();
    int in = r.u16();
    int out = r.u16();
    int k = r.u8();
    PadMode pad = static_cast<PadMode>(r.u8());
    require(dims == 1 || dims == 2, Errc::format, "model: bad conv dims");
    require(in >= 1 && out >= 1 && k >= 1 && k % 2 == 1, Errc::format, "model: bad conv geometry");
    ConvLayerSpec l = dims == 1 ? make_conv1d(in, out, k, pad) : make_conv2d(in, out, k, pad);
    for (auto& v : l.weights.values_mut()) v = r.f32();
    for (auto& v : l.bias.values_mut()) v = r.f32();
    net.layers.push_back(std::move(l));
  }
  return net;
}

void write_tensor_values(ByteWriter& w, const Tensor& t) {
  for (float v : t.values()) w.f32(v);
}

void read_tensor_values(ByteReader& r, Tensor& t) {
  for (auto& v : t.values_mut()) v = r.f32();
}

}  // namespace

std::vector<uint8_t> serialize_model(const Model& m) {
  ByteWriter w;
  w.tag("NWFM");
  w.u16(m.version);
  w.u8(static_cast<uint8_t>(m.scheme()));
  w.u8(static_cast<uint8_t>(m.repeat));
  w.u8(static_cast<uint8_t>(m.channels));
  w.u8(static_cast<uint8_t>(m.n_hidden));
  w.u16(static_cast<uint16_t>(m.hidden_channel));
  w.u8(static_cast<uint8_t>(m.mixture_k));
  w.u8(m.prior_net ? 1 : 0);
  w.tag("TNET");
  w.u16(static_cast<uint16_t>(m.flow.block.nets.size()));
  for (const auto& net : m.flow.block.nets) write_net(w, net);
  w.tag("PRIR");
  write_tensor_values(w, m.priors.factor_mu);
  write_tensor_values(w, m.priors.factor_log_s);
  write_tensor_values(w, m.priors.final_logits);
  write_tensor_values(w, m.priors.final_mu);
  write_tensor_values(w, m.priors.final_log_s);
  if (m.prior_net) {
    w.tag("PNET");
    write_net(w, m.priors.net);
  }
  return std::move(w.bytes);
}

Model parse_model(std::span<const uint8_t> bytes) {
  ByteReader r{bytes};
  r.expect_tag("NWFM");
  Model m;
  m.version = r.u16();
  require(m.version == 1, Errc::format, "model: unsupported version");
  Scheme scheme = static_cast<Scheme>(r.u8());
  require(scheme == Scheme::OneD || scheme == Scheme::TwoD, Errc::format, "model: bad scheme id");
  m.repeat = r.u8();
  m.channels = r.u8();
  m.n_hidden = r.u8();
  m.hidden_channel = r.u16();
  m.mixture_k = r.u8();
  m.prior_net = r.u8() != 0;
  require(m.channels == 1 || m.channels == 3, Errc::format, "model: bad channel count");

  r.expect_tag("TNET");
  int nets = r.u16();
  int expected = scheme == Scheme::TwoD ? m.repeat : 2 * m.repeat;
  require(nets == expected, Errc::format, "model: net count inconsistent with repeat");
  m.flow.block.scheme = scheme;
  m.flow.block.channels = m.channels;
  bool norm = scheme == Scheme::TwoD;
  float out_scale = scheme == Scheme::TwoD ? 255.0f : 1.0f;
  for (int i = 0; i < nets; ++i) m.flow.block.nets.push_back(read_net(r, norm, out_scale));
  m.flow.integer_mode = true;

  r.expect_tag("PRIR");
  m.priors = make_priors(scheme, m.channels, m.mixture_k, false, m.hidden_channel, m.n_hidden);
  read_tensor_values(r, m.priors.factor_mu);
  read_tensor_values(r, m.priors.factor_log_s);
  read_tensor_values(r, m.priors.final_logits);
  read_tensor_values(r, m.priors.final_mu);
  read_tensor_values(r, m.priors.final_log_s);
  if (m.prior_net) {
    r.expect_tag("PNET");
    m.priors.use_net = true;
    m.priors.net = read_net(r, /*norm_input=*/true, /*out_scale=*/1.0f);
    require(!m.priors.net.layers.empty() &&
                m.priors.net.layers.front().in_channels == m.channels &&
                m.priors.net.layers.back().out_channels == 6 * m.channels,
            Errc::format, "model: prior net geometry");
  }
  require(r.pos == bytes.size(), Errc::format, "model: trailing bytes");
  return m;
}

void save_model(const Model& m, const std::string& path) {
  auto bytes = serialize_model(m);
  std::ofstream f(path, std::ios::binary);
  require(f.good(), Errc::io, "cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(f.good(), Errc::io, "write failed for " + path);
}

Model load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), Errc::io, "cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_model(bytes);
}

uint64_t model_hash(const Model& m) { return fnv1a64(serialize_model(m)); }

}  // namespace nwf
