#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "nwf/analysis.hpp"
#include "nwf/codec.hpp"
#include "nwf/rans.hpp"
#include "nwf/train.hpp"

namespace {

using namespace nwf;

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), Errc::io, "cannot open " + path);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(f)),
                              std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), Errc::io, "cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(f.good(), Errc::io, "write failed for " + path);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  require(f.good(), Errc::io, "cannot write " + path);
  f << text;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_path, bool resume) {
  TrainConfig cfg = TrainConfig::from_file(config_path);

  std::vector<ImageU8> all;
  for (const auto& p : list_images(data_dir)) {
    ImageU8 img = read_ppm(p);
    if (cfg.colorspace == "ycbcr") {
      require(img.channels == 3, Errc::contract, "train: ycbcr corpus needs 3-channel images");
      img = rgb_to_ycbcr(img);
    }
    for (auto& patch : extract_patches(img, cfg.patch_size, cfg.patch_size))
      all.push_back(std::move(patch));
  }
  require(!all.empty(), Errc::contract, "train: corpus is empty");

  std::vector<ImageU8> train_p, val_p;
  split_train_val(all, cfg.val_fraction, cfg.seed, &train_p, &val_p);
  CorpusIter corpus(std::move(train_p), cfg.batch_size, cfg.seed);
  std::vector<const ImageU8*> val_ptrs;
  for (const auto& p : val_p) val_ptrs.push_back(&p);

  std::string ckpt = out_path + ".ckpt";
  Model model = build_model_for_training(cfg);
  int start_epoch = 0;
  Adamax opt(model.parameters(), cfg.lr_base, cfg.decay);
  if (resume && std::filesystem::exists(ckpt)) {
    model = load_model(ckpt);
    opt = Adamax(model.parameters(), cfg.lr_base, cfg.decay);
    start_epoch = load_optimizer(opt, ckpt + ".opt");
    std::cout << "resuming from epoch " << start_epoch << "\n";
  }

  auto rows = train_model(model, opt, cfg, corpus, val_ptrs, ckpt, start_epoch);
  save_model(model, out_path);
  std::string metrics_path = out_path + ".metrics.csv";
  write_text(metrics_path, metrics_csv(rows));
  for (const auto& r : rows)
    std::cout << "epoch " << r.epoch << " train_bpd " << r.train_bpd << " val_bpd " << r.val_bpd
              << " lr " << r.lr << "\n";
  std::cout << "model written to " << out_path << "\n";
  return 0;
}

int cmd_compress(const std::string& in_path, const std::string& model_path,
                 const std::string& out_path, bool ycbcr) {
  Model model = load_model(model_path);
  ImageU8 img = read_ppm(in_path);
  auto bytes = compress(img, model, {ycbcr});
  write_file(out_path, bytes);
  double dims = static_cast<double>(img.pixel_count()) * img.channels;
  std::cout << out_path << ": " << bytes.size() << " bytes, "
            << 8.0 * static_cast<double>(bytes.size()) / dims << " bpd\n";
  return 0;
}

int cmd_decompress(const std::string& in_path, const std::string& model_path,
                   const std::string& out_path) {
  Model model = load_model(model_path);
  ImageU8 img = decompress(read_file(in_path), model);
  write_ppm(img, out_path);
  std::cout << out_path << ": " << img.width << "x" << img.height << "x" << img.channels << "\n";
  return 0;
}

int cmd_progressive(const std::string& in_path, const std::string& model_path, int levels,
                    const std::string& out_path) {
  Model model = load_model(model_path);
  ImageU8 img = progressive_decode(read_file(in_path), model, levels);
  write_ppm(img, out_path);
  std::cout << out_path << ": " << img.width << "x" << img.height << " (level " << levels << ")\n";
  return 0;
}

int cmd_upsample(const std::string& in_path, const std::string& model_path, int factor,
                 uint64_t seed, const std::string& out_path) {
  Model model = load_model(model_path);
  ImageU8 img = upsample(read_ppm(in_path), model, factor, seed);
  write_ppm(img, out_path);
  std::cout << out_path << ": " << img.width << "x" << img.height << "\n";
  return 0;
}

int cmd_analyze(const std::string& model_path, const std::string& image_path,
                const std::string& out_dir, int row_index) {
  Model model = load_model(model_path);
  ImageU8 img = read_ppm(image_path);
  std::filesystem::create_directories(out_dir);

  Model cont = model;
  cont.flow.integer_mode = false;
  FilterBank bank = extract_filters(cont, img, row_index);
  write_text(out_dir + "/filters.csv", filters_csv(bank));
  write_text(out_dir + "/response.csv", response_csv(bank, 129));

  NoGradGuard ng;
  LatentPyramid pyr = wavelet_forward(image_to_tensor(img), model.flow);
  write_ppm(visualize_latents(pyr, model.priors), out_dir + "/mosaic.ppm");
  std::cout << "wrote filters.csv, response.csv, mosaic.ppm to " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// selftest: wavelet oracle, codec round-trip, rANS fuzz

ImageU8 random_image(int w, int h, int c, std::mt19937_64& rng) {
  ImageU8 img(w, h, c);
  for (auto& v : img.data) v = static_cast<uint8_t>(rng() & 0xff);
  return img;
}

// direct evaluation of the lifting equations, replicate boundaries
void lift_oracle(const std::vector<long>& o, const std::vector<long>& e, bool haar,
                 std::vector<long>* d_out, std::vector<long>* s_out) {
  size_t n = o.size();
  std::vector<long> d(n), s(n);
  for (size_t k = 0; k < n; ++k) {
    long on = k + 1 < n ? o[k + 1] : o[n - 1];
    double pred = haar ? static_cast<double>(o[k]) : (static_cast<double>(o[k]) + on) / 2.0;
    d[k] = e[k] - round_nearest(pred);
  }
  for (size_t k = 0; k < n; ++k) {
    long dm = k > 0 ? d[k - 1] : d[0];
    double upd = haar ? static_cast<double>(d[k]) / 2.0 : (static_cast<double>(d[k]) + dm) / 4.0;
    s[k] = o[k] + round_nearest(upd);
  }
  *d_out = d;
  *s_out = s;
}

bool selftest_wavelet_oracle() {
  std::mt19937_64 rng(7);
  for (int wavelet = 0; wavelet < 2; ++wavelet) {
    bool haar = wavelet == 1;
    Model m = make_model(Scheme::OneD, 3, 1, 2, 16, 5, false,
                         haar ? WaveletInit::Haar : WaveletInit::LeGall, 0);
    for (int trial = 0; trial < 200; ++trial) {
      int n = 8 << (rng() % 3);
      std::vector<float> sig(static_cast<size_t>(3) * n);
      for (auto& v : sig) v = static_cast<float>(rng() % 256);
      NoGradGuard ng;
      Tensor x = Tensor::from_values({3, n}, sig);
      auto [even, odd] = split_even_odd(x);
      Tensor e0 = even.clone_detached(), o0 = odd.clone_detached();
      coupling_forward_1d(even, odd, m.flow.block, true);
      for (int c = 0; c < 3; ++c) {
        std::vector<long> o(n / 2), e(n / 2), d, s;
        for (int i = 0; i < n / 2; ++i) {
          o[i] = std::lround(e0.values()[c * (n / 2) + i]);
          e[i] = std::lround(o0.values()[c * (n / 2) + i]);
        }
        lift_oracle(o, e, haar, &d, &s);
        for (int i = 0; i < n / 2; ++i) {
          if (std::lround(even.values()[c * (n / 2) + i]) != s[i]) return false;
          if (std::lround(odd.values()[c * (n / 2) + i]) != d[i]) return false;
        }
      }
    }
  }
  return true;
}

bool selftest_codec() {
  std::mt19937_64 rng(11);
  Model legall = make_model(Scheme::OneD, 3, 1, 2, 16, 5, false, WaveletInit::LeGall, 0);
  Model rand2d = make_model(Scheme::TwoD, 3, 1, 1, 8, 5, false, WaveletInit::Random, 3);
  for (int trial = 0; trial < 6; ++trial) {
    int size = 8 << (trial % 2);
    ImageU8 img = random_image(size, size, 3, rng);
    for (const Model* m : {&legall, &rand2d}) {
      auto bytes = compress(img, *m);
      ImageU8 back = decompress(bytes, *m);
      if (back.data != img.data) return false;
    }
  }
  return true;
}

bool selftest_rans() {
  std::mt19937_64 rng(13);
  // hand examples of the core maps (m=4, l=[1,3], b=[0,1])
  FrequencyTable t;
  t.precision_bits = 2;
  t.lo = 0;
  t.freq = {1, 3};
  t.cum = {0, 1, 4};
  if (rans_encode_step(5, 1, t) != 7) return false;
  if (rans_encode_step(5, 0, t) != 20) return false;
  if (rans_decode_step(7, t) != std::pair<size_t, uint64_t>{1, 5}) return false;
  if (rans_decode_step(20, t) != std::pair<size_t, uint64_t>{0, 5}) return false;

  for (int trial = 0; trial < 20; ++trial) {
    int alphabet = 2 + static_cast<int>(rng() % 64);
    std::vector<double> pmf(alphabet);
    for (auto& p : pmf) p = 1.0 + static_cast<double>(rng() % 1000);
    FrequencyTable table = build_table(pmf, -alphabet / 2);
    size_t count = 5000;
    std::vector<long> symbols(count);
    for (auto& s : symbols)
      s = table.lo + static_cast<long>(rng() % alphabet);
    std::vector<StreamSymbol> stream(count);
    for (size_t i = 0; i < count; ++i) stream[i] = {symbols[i], &table};
    auto bytes = encode_stream(stream);
    RansDecoder dec(bytes);
    for (size_t i = 0; i < count; ++i)
      if (table.lo + static_cast<long>(dec.get(table)) != symbols[i]) return false;
  }
  return true;
}

int cmd_selftest() {
  struct Suite {
    const char* name;
    bool (*fn)();
  };
  const Suite suites[] = {{"wavelet-oracle", selftest_wavelet_oracle},
                          {"codec-round-trip", selftest_codec},
                          {"rans-fuzz", selftest_rans}};
  bool all_ok = true;
  for (const auto& s : suites) {
    bool ok = false;
    try {
      ok = s.fn();
    } catch (const std::exception& e) {
      std::cerr << s.name << " threw: " << e.what() << "\n";
    }
    std::cout << (ok ? "PASS" : "FAIL") << " " << s.name << "\n";
    all_ok = all_ok && ok;
  }
  return all_ok ? 0 : 9;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural wavelet flow codec"};
  app.require_subcommand(1);

  std::string config_path, data_dir, model_path, in_path, out_path, out_dir;
  bool ycbcr = false, resume = false;
  int levels = 0, factor = 4, row_index = 1;
  uint64_t seed = 0;

  auto* train = app.add_subcommand("train", "train a model on a corpus of ppm/pgm images");
  train->add_option("--config", config_path, "key = value config file")->required();
  train->add_option("--data", data_dir, "directory of ppm/pgm images")->required();
  train->add_option("--out", out_path, "output model file")->required();
  train->add_flag("--resume", resume, "resume from <out>.ckpt");

  auto* comp = app.add_subcommand("compress", "compress a ppm/pgm image");
  comp->add_option("input", in_path, "input image")->required();
  comp->add_option("--model", model_path)->required();
  comp->add_option("--out", out_path)->required();
  comp->add_flag("--ycbcr", ycbcr, "convert to YCbCr before coding");

  auto* dec = app.add_subcommand("decompress", "decompress to a ppm/pgm image");
  dec->add_option("input", in_path, "compressed file")->required();
  dec->add_option("--model", model_path)->required();
  dec->add_option("--out", out_path)->required();

  auto* prog = app.add_subcommand("progressive", "decode a stream prefix at reduced size");
  prog->add_option("input", in_path, "compressed file")->required();
  prog->add_option("--model", model_path)->required();
  prog->add_option("--levels", levels, "refinement levels to decode")->required();
  prog->add_option("--out", out_path)->required();

  auto* up = app.add_subcommand("upsample", "sample a super-resolved image");
  up->add_option("input", in_path, "input image")->required();
  up->add_option("--model", model_path)->required();
  up->add_option("--factor", factor, "power-of-two upscale factor");
  up->add_option("--seed", seed, "sampling seed");
  up->add_option("--out", out_path)->required();

  auto* ana = app.add_subcommand("analyze", "extract filters, responses and a latent mosaic");
  ana->add_option("--model", model_path)->required();
  ana->add_option("--image", in_path)->required();
  ana->add_option("--out-dir", out_dir)->required();
  ana->add_option("--row", row_index, "base row for the Jacobian (default 1)");

  auto* self = app.add_subcommand("selftest", "run built-in wavelet/codec/rans checks");

  try {
    app.parse(argc, argv);
    if (train->parsed()) return cmd_train(config_path, data_dir, out_path, resume);
    if (comp->parsed()) return cmd_compress(in_path, model_path, out_path, ycbcr);
    if (dec->parsed()) return cmd_decompress(in_path, model_path, out_path);
    if (prog->parsed()) return cmd_progressive(in_path, model_path, levels, out_path);
    if (up->parsed()) return cmd_upsample(in_path, model_path, factor, seed, out_path);
    if (ana->parsed()) return cmd_analyze(model_path, in_path, out_dir, row_index);
    if (self->parsed()) return cmd_selftest();
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const nwf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
