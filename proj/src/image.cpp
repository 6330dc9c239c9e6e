#include "nwf/image.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

namespace nwf {

namespace {

inline uint8_t round_clamp_u8(double v) {
  double r = std::floor(v + 0.5);
  if (r < 0.0) return 0;
  if (r > 255.0) return 255;
  return static_cast<uint8_t>(r);
}

}  // namespace

ImageU8 rgb_to_ycbcr(const ImageU8& img) {
  require(img.channels == 3, Errc::contract, "rgb_to_ycbcr: needs 3 channels");
  ImageU8 out(img.width, img.height, 3);
  size_t n = img.pixel_count();
  for (size_t i = 0; i < n; ++i) {
    double r = img.data[i];
    double g = img.data[n + i];
    double b = img.data[2 * n + i];
    out.data[i] = round_clamp_u8(0.299 * r + 0.587 * g + 0.114 * b);
    out.data[n + i] = round_clamp_u8(-0.1687 * r - 0.3313 * g + 0.5 * b + 128.0);
    out.data[2 * n + i] = round_clamp_u8(0.5 * r - 0.4187 * g - 0.0813 * b + 128.0);
  }
  return out;
}

ImageU8 ycbcr_to_rgb(const ImageU8& img) {
  require(img.channels == 3, Errc::contract, "ycbcr_to_rgb: needs 3 channels");
  ImageU8 out(img.width, img.height, 3);
  size_t n = img.pixel_count();
  for (size_t i = 0; i < n; ++i) {
    double y = img.data[i];
    double cb = img.data[n + i];
    double cr = img.data[2 * n + i];
    out.data[i] = round_clamp_u8(y + 1.402 * cr - 1.402 * 128.0);
    out.data[n + i] = round_clamp_u8(y - 0.34414 * cb - 0.71414 * cr + 135.45984);
    out.data[2 * n + i] = round_clamp_u8(y + 1.772 * cb - 226.816);
  }
  return out;
}

// ---------------------------------------------------------------------------
// PPM / PGM

namespace {

struct ByteCursor {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;

  int peek() const { return pos < bytes.size() ? bytes[pos] : -1; }
  int get() { return pos < bytes.size() ? bytes[pos++] : -1; }

  void skip_space_and_comments() {
    for (;;) {
      int c = peek();
      if (c == '#') {
        while (c != '\n' && c != -1) c = get();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        get();
      } else {
        return;
      }
    }
  }

  int read_int() {
    skip_space_and_comments();
    require(std::isdigit(peek()), Errc::format, "ppm: expected integer");
    long v = 0;
    while (std::isdigit(peek())) {
      v = v * 10 + (get() - '0');
      require(v < (1L << 30), Errc::format, "ppm: integer too large");
    }
    return static_cast<int>(v);
  }
};

}  // namespace

ImageU8 parse_ppm(const std::vector<uint8_t>& bytes) {
  require(bytes.size() >= 2, Errc::format, "ppm: truncated header");
  int channels;
  if (bytes[0] == 'P' && bytes[1] == '5') channels = 1;
  else if (bytes[0] == 'P' && bytes[1] == '6') channels = 3;
  else fail(Errc::format, "ppm: bad magic (want P5 or P6)");

  ByteCursor cur{bytes, 2};
  int w = cur.read_int();
  int h = cur.read_int();
  int maxval = cur.read_int();
  require(maxval == 255, Errc::format, "ppm: unsupported maxval (only 255)");
  require(w > 0 && h > 0, Errc::format, "ppm: bad dimensions");
  int sep = cur.get();
  require(sep == ' ' || sep == '\t' || sep == '\r' || sep == '\n', Errc::format,
          "ppm: missing separator after maxval");

  size_t need = static_cast<size_t>(w) * h * channels;
  require(bytes.size() - cur.pos >= need, Errc::format, "ppm: truncated pixel data");

  ImageU8 img(w, h, channels);
  // file is pixel-interleaved; store planar
  const uint8_t* src = bytes.data() + cur.pos;
  size_t n = img.pixel_count();
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < channels; ++c) img.data[c * n + i] = src[i * channels + c];
  return img;
}

std::vector<uint8_t> serialize_ppm(const ImageU8& img) {
  require(img.valid(), Errc::contract, "ppm: invalid image");
  std::string header = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  size_t n = img.pixel_count();
  out.reserve(out.size() + n * img.channels);
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < img.channels; ++c) out.push_back(img.data[c * n + i]);
  return out;
}

ImageU8 read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), Errc::io, "cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_ppm(bytes);
}

void write_ppm(const ImageU8& img, const std::string& path) {
  auto bytes = serialize_ppm(img);
  std::ofstream f(path, std::ios::binary);
  require(f.good(), Errc::io, "cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(f.good(), Errc::io, "write failed for " + path);
}

// ---------------------------------------------------------------------------
// patches / corpus

std::vector<ImageU8> extract_patches(const ImageU8& img, int size, int stride) {
  require(size > 0 && stride > 0, Errc::contract, "extract_patches: bad size/stride");
  std::vector<ImageU8> out;
  size_t n = img.pixel_count();
  for (int y = 0; y + size <= img.height; y += stride)
    for (int x = 0; x + size <= img.width; x += stride) {
      ImageU8 p(size, size, img.channels);
      for (int c = 0; c < img.channels; ++c)
        for (int py = 0; py < size; ++py)
          for (int px = 0; px < size; ++px)
            p.data[(static_cast<size_t>(c) * size + py) * size + px] =
                img.data[c * n + static_cast<size_t>(y + py) * img.width + (x + px)];
      out.push_back(std::move(p));
    }
  return out;
}

std::vector<std::string> list_images(const std::string& dir) {
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), Errc::io, "not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    if (ext == ".ppm" || ext == ".pgm") paths.push_back(e.path().string());
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

CorpusIter::CorpusIter(const std::string& dir, int patch_size, int batch, uint64_t seed)
    : batch_(batch), seed_(seed) {
  for (const auto& p : list_images(dir)) {
    ImageU8 img = read_ppm(p);
    auto ps = extract_patches(img, patch_size, patch_size);
    for (auto& patch : ps) patches_.push_back(std::move(patch));
  }
  require(!patches_.empty(), Errc::contract, "corpus: no patches found under " + dir);
}

CorpusIter::CorpusIter(std::vector<ImageU8> patches, int batch, uint64_t seed)
    : patches_(std::move(patches)), batch_(batch), seed_(seed) {
  require(!patches_.empty(), Errc::contract, "corpus: empty patch list");
}

std::vector<std::vector<const ImageU8*>> CorpusIter::epoch_batches(int epoch) const {
  // bucket by (w,h); remaining-samples counter picks the bucket per batch
  std::vector<std::pair<long, std::vector<const ImageU8*>>> buckets;
  for (const auto& p : patches_) {
    long key = static_cast<long>(p.width) << 20 | p.height;
    auto it = std::find_if(buckets.begin(), buckets.end(),
                           [key](const auto& b) { return b.first == key; });
    if (it == buckets.end()) {
      buckets.push_back({key, {}});
      it = buckets.end() - 1;
    }
    it->second.push_back(&p);
  }
  std::mt19937_64 rng(seed_ + 0x9e3779b97f4a7c15ull * static_cast<uint64_t>(epoch + 1));
  for (auto& b : buckets) std::shuffle(b.second.begin(), b.second.end(), rng);

  std::vector<size_t> remaining(buckets.size());
  for (size_t i = 0; i < buckets.size(); ++i) remaining[i] = buckets[i].second.size();
  std::vector<size_t> cursor(buckets.size(), 0);

  std::vector<std::vector<const ImageU8*>> out;
  size_t total = patches_.size();
  while (total > 0) {
    // draw a bucket with probability proportional to its remaining count
    uint64_t r = rng() % total;
    size_t pick = 0;
    uint64_t acc = 0;
    for (size_t i = 0; i < buckets.size(); ++i) {
      acc += remaining[i];
      if (r < acc) {
        pick = i;
        break;
      }
    }
    size_t take = std::min<size_t>(batch_, remaining[pick]);
    std::vector<const ImageU8*> batch(buckets[pick].second.begin() + cursor[pick],
                                      buckets[pick].second.begin() + cursor[pick] + take);
    cursor[pick] += take;
    remaining[pick] -= take;
    total -= take;
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace nwf
