#include "nwf/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nwf/prior.hpp"
#include "nwf/wire.hpp"

namespace nwf {

void TrainConfig::validate() const {
  require(epochs >= 1 && batch_size >= 1, Errc::contract, "config: epochs/batch_size positive");
  require(repeat >= 1 && n_hidden >= 0 && hidden_channel >= 1, Errc::contract,
          "config: net geometry positive");
  require(lr_base > 0 && decay > 0, Errc::contract, "config: lr/decay positive");
  require(k >= 1, Errc::contract, "config: k >= 1");
  require(patch_size >= 4 && is_power_of_two(patch_size), Errc::contract,
          "config: patch_size must be a power of two >= 4");
  require(scheme == 1 || scheme == 2, Errc::contract, "config: scheme is 1 or 2");
  require(channels == 1 || channels == 3, Errc::contract, "config: channels is 1 or 3");
  require(colorspace == "rgb" || colorspace == "ycbcr", Errc::contract,
          "config: colorspace is rgb or ycbcr");
  require(init == "legall" || init == "haar" || init == "zero" || init == "random",
          Errc::contract, "config: unknown init");
  require((init != "legall" && init != "haar") || scheme == 1, Errc::contract,
          "config: wavelet inits need scheme 1");
  require(val_fraction >= 0.0 && val_fraction < 1.0, Errc::contract, "config: val_fraction");
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto notspace = [](unsigned char ch) { return !std::isspace(ch); };
    line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
    line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
    if (line.empty()) continue;
    auto eq = line.find('=');
    require(eq != std::string::npos, Errc::format,
            "config: line " + std::to_string(lineno) + " is not key = value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
    val.erase(val.begin(), std::find_if(val.begin(), val.end(), notspace));

    if (key == "epochs") cfg.epochs = std::stoi(val);
    else if (key == "batch_size") cfg.batch_size = std::stoi(val);
    else if (key == "repeat") cfg.repeat = std::stoi(val);
    else if (key == "n_hidden") cfg.n_hidden = std::stoi(val);
    else if (key == "hidden_channel") cfg.hidden_channel = std::stoi(val);
    else if (key == "lr_base") cfg.lr_base = std::stod(val);
    else if (key == "decay") cfg.decay = std::stod(val);
    else if (key == "k") cfg.k = std::stoi(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "colorspace") cfg.colorspace = val;
    else if (key == "patch_size") cfg.patch_size = std::stoi(val);
    else if (key == "prior_net_enabled") cfg.prior_net_enabled = (val == "1" || val == "true");
    else if (key == "scheme") cfg.scheme = std::stoi(val);
    else if (key == "init") cfg.init = val;
    else if (key == "channels") cfg.channels = std::stoi(val);
    else if (key == "val_fraction") cfg.val_fraction = std::stod(val);
    else fail(Errc::format, "config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), Errc::io, "cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

Model build_model_for_training(const TrainConfig& cfg) {
  WaveletInit init = WaveletInit::Zero;
  if (cfg.init == "legall") init = WaveletInit::LeGall;
  else if (cfg.init == "haar") init = WaveletInit::Haar;
  else if (cfg.init == "random") init = WaveletInit::Random;
  Model m = make_model(cfg.scheme == 1 ? Scheme::OneD : Scheme::TwoD, cfg.channels, cfg.repeat,
                       cfg.n_hidden, cfg.hidden_channel, cfg.k, cfg.prior_net_enabled, init,
                       cfg.seed);
  // all-zero nets (zero init, or extra repeats of a wavelet init) are
  // gradient-dead through relu'(0); reseed their hidden layers, keep the
  // last layer zero so the transform is unchanged
  revive_dead_nets(m.flow.block, cfg.seed + 0x5eed);
  return m;
}

Tensor batch_loss_bpd(const std::vector<const ImageU8*>& batch, const Model& model,
                      bool continuous) {
  require(!batch.empty(), Errc::contract, "loss: empty batch");
  WaveletFlow flow = model.flow;
  flow.integer_mode = !continuous;
  Tensor acc = Tensor::scalar(0.0f);
  for (const ImageU8* img : batch) {
    LatentPyramid pyr = wavelet_forward(image_to_tensor(*img), flow);
    acc = add(acc, pyramid_bpd(pyr, model.priors));
  }
  return scale(acc, 1.0f / static_cast<float>(batch.size()));
}

double eval_bpd(const std::vector<const ImageU8*>& patches, const Model& model) {
  require(!patches.empty(), Errc::contract, "eval: empty patch list");
  NoGradGuard ng;
  double acc = 0.0;
  for (const ImageU8* img : patches) {
    LatentPyramid pyr = wavelet_forward(image_to_tensor(*img), model.flow);
    acc += static_cast<double>(pyramid_bpd(pyr, model.priors).item());
  }
  return acc / static_cast<double>(patches.size());
}

namespace {

void check_invertibility_probe(const Model& model, const ImageU8& probe) {
  NoGradGuard ng;
  WaveletFlow flow = model.flow;
  flow.integer_mode = true;
  Tensor x = image_to_tensor(probe);
  LatentPyramid pyr = wavelet_forward(x, flow);
  Tensor back = wavelet_inverse(pyr, flow);
  for (size_t i = 0; i < x.numel(); ++i)
    require(x.values()[i] == back.values()[i], Errc::numeric,
            "training: invertibility probe failed after epoch");
}

}  // namespace

std::vector<EpochMetrics> train_model(Model& model, Adamax& opt, const TrainConfig& cfg,
                                      const CorpusIter& train_set,
                                      const std::vector<const ImageU8*>& val_patches,
                                      const std::string& checkpoint_path, int start_epoch) {
  require(train_set.patch_count() > 0, Errc::contract, "train: empty corpus");
  std::vector<EpochMetrics> rows;
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr_base * std::pow(cfg.decay, epoch);
    double train_acc = 0.0;
    auto batches = train_set.epoch_batches(epoch);
    for (const auto& batch : batches) {
      opt.zero_grad();
      Tensor loss = batch_loss_bpd(batch, model);
      backward(loss);
      opt.step(epoch);
      train_acc += static_cast<double>(loss.item());
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_bpd = train_acc / static_cast<double>(batches.size());
    m.val_bpd = val_patches.empty() ? 0.0 : eval_bpd(val_patches, model);
    m.lr = lr;
    rows.push_back(m);

    check_invertibility_probe(model, *batches.front().front());
    if (!checkpoint_path.empty()) {
      save_model(model, checkpoint_path);
      save_optimizer(opt, epoch + 1, checkpoint_path + ".opt");
    }
  }
  return rows;
}

std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
  std::ostringstream os;
  os << "epoch,train_bpd,val_bpd,lr\n";
  for (const auto& r : rows)
    os << r.epoch << "," << r.train_bpd << "," << r.val_bpd << "," << r.lr << "\n";
  return os.str();
}

void save_optimizer(const Adamax& opt, int next_epoch, const std::string& path) {
  ByteWriter w;
  w.tag("NWFO");
  w.u32(static_cast<uint32_t>(next_epoch));
  const auto& st = opt.state();
  w.u64(static_cast<uint64_t>(st.step));
  w.u32(static_cast<uint32_t>(st.first_moment.size()));
  for (size_t i = 0; i < st.first_moment.size(); ++i) {
    w.u32(static_cast<uint32_t>(st.first_moment[i].size()));
    for (float v : st.first_moment[i]) w.f32(v);
    for (float v : st.inf_norm[i]) w.f32(v);
  }
  std::ofstream f(path, std::ios::binary);
  require(f.good(), Errc::io, "cannot write " + path);
  f.write(reinterpret_cast<const char*>(w.bytes.data()), static_cast<std::streamsize>(w.bytes.size()));
}

int load_optimizer(Adamax& opt, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), Errc::io, "cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ByteReader r{bytes};
  r.expect_tag("NWFO");
  int next_epoch = static_cast<int>(r.u32());
  auto& st = opt.state();
  st.step = static_cast<long>(r.u64());
  uint32_t nparams = r.u32();
  require(nparams == st.first_moment.size(), Errc::format,
          "optimizer state: parameter count mismatch");
  for (uint32_t i = 0; i < nparams; ++i) {
    uint32_t n = r.u32();
    require(n == st.first_moment[i].size(), Errc::format, "optimizer state: buffer size mismatch");
    for (auto& v : st.first_moment[i]) v = r.f32();
    for (auto& v : st.inf_norm[i]) v = r.f32();
  }
  return next_epoch;
}

void split_train_val(const std::vector<ImageU8>& patches, double val_fraction, uint64_t seed,
                     std::vector<ImageU8>* train_out, std::vector<ImageU8>* val_out) {
  size_t val_every = val_fraction > 0.0 ? static_cast<size_t>(std::lround(1.0 / val_fraction)) : 0;
  for (size_t i = 0; i < patches.size(); ++i) {
    bool is_val = val_every > 0 && (i + seed) % val_every == 0;
    (is_val ? val_out : train_out)->push_back(patches[i]);
  }
  if (train_out->empty() && !val_out->empty()) {
    train_out->push_back(val_out->back());
    val_out->pop_back();
  }
}

}  // namespace nwf
