#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "nwf/image.hpp"
#include "support.hpp"

using namespace nwf;

TEST_CASE("rgb_to_ycbcr hand triples") {
  ImageU8 img(3, 1, 3);
  // pixels: white, black, pure red
  img.at(0, 0, 0) = 255; img.at(1, 0, 0) = 255; img.at(2, 0, 0) = 255;
  img.at(0, 0, 1) = 0;   img.at(1, 0, 1) = 0;   img.at(2, 0, 1) = 0;
  img.at(0, 0, 2) = 255; img.at(1, 0, 2) = 0;   img.at(2, 0, 2) = 0;
  ImageU8 ycc = rgb_to_ycbcr(img);
  CHECK(ycc.at(0, 0, 0) == 255); CHECK(ycc.at(1, 0, 0) == 128); CHECK(ycc.at(2, 0, 0) == 128);
  CHECK(ycc.at(0, 0, 1) == 0);   CHECK(ycc.at(1, 0, 1) == 128); CHECK(ycc.at(2, 0, 1) == 128);
  // red: Y = 76.245 -> 76, Cb = 84.98 -> 85, Cr = 255.5 -> 256 -> clamp 255
  CHECK(ycc.at(0, 0, 2) == 76);  CHECK(ycc.at(1, 0, 2) == 85);  CHECK(ycc.at(2, 0, 2) == 255);
}

TEST_CASE("ycbcr_to_rgb hand triples") {
  ImageU8 ycc(2, 1, 3);
  ycc.at(0, 0, 0) = 255; ycc.at(1, 0, 0) = 128; ycc.at(2, 0, 0) = 128;
  ycc.at(0, 0, 1) = 0;   ycc.at(1, 0, 1) = 128; ycc.at(2, 0, 1) = 128;
  ImageU8 rgb = ycbcr_to_rgb(ycc);
  for (int c = 0; c < 3; ++c) {
    CHECK(std::abs(static_cast<int>(rgb.at(c, 0, 0)) - 255) <= 1);
    CHECK(std::abs(static_cast<int>(rgb.at(c, 0, 1)) - 0) <= 1);
  }
}

TEST_CASE("ycbcr round-trip error at most 2 per channel") {
  std::mt19937_64 rng(5);
  int worst = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    ImageU8 img(8, 8, 3);
    for (auto& v : img.data) v = static_cast<uint8_t>(rng() & 0xff);
    ImageU8 back = ycbcr_to_rgb(rgb_to_ycbcr(img));
    for (size_t i = 0; i < img.data.size(); ++i)
      worst = std::max(worst, std::abs(static_cast<int>(img.data[i]) - back.data[i]));
  }
  CHECK(worst <= 2);
}

TEST_CASE("ppm round-trip is bit-exact") {
  ImageU8 img = nwf::testing::random_image(9, 5, 3, 3);
  auto bytes = serialize_ppm(img);
  ImageU8 back = parse_ppm(bytes);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.data == img.data);
  CHECK(serialize_ppm(back) == bytes);

  ImageU8 gray = nwf::testing::random_image(4, 7, 1, 4);
  CHECK(parse_ppm(serialize_ppm(gray)).data == gray.data);
}

TEST_CASE("ppm file io") {
  auto dir = std::filesystem::temp_directory_path() / "nwf_test_ppm";
  std::filesystem::create_directories(dir);
  ImageU8 img = nwf::testing::smooth_image(16, 16, 3, 6);
  std::string path = (dir / "a.ppm").string();
  write_ppm(img, path);
  CHECK(read_ppm(path).data == img.data);
  std::filesystem::remove_all(dir);
}

TEST_CASE("ppm malformed inputs rejected") {
  std::vector<uint8_t> bad = {'P', '4', '\n'};
  CHECK_THROWS_AS(parse_ppm(bad), Error);

  std::string maxval_wrong = "P5\n2 2\n127\n";
  std::vector<uint8_t> mv(maxval_wrong.begin(), maxval_wrong.end());
  mv.insert(mv.end(), {0, 0, 0, 0});
  CHECK_THROWS_AS(parse_ppm(mv), Error);

  std::string truncated = "P6\n4 4\n255\n";
  std::vector<uint8_t> tr(truncated.begin(), truncated.end());
  tr.insert(tr.end(), {1, 2, 3});
  CHECK_THROWS_AS(parse_ppm(tr), Error);
}

TEST_CASE("ppm header comments accepted") {
  std::string with_comment = "P5\n# a comment\n2 1\n255\n";
  std::vector<uint8_t> bytes(with_comment.begin(), with_comment.end());
  bytes.insert(bytes.end(), {42, 7});
  ImageU8 img = parse_ppm(bytes);
  CHECK(img.width == 2);
  CHECK(img.data == std::vector<uint8_t>{42, 7});
}

TEST_CASE("extract_patches counts and bounds") {
  ImageU8 img = nwf::testing::random_image(64, 64, 3, 7);
  CHECK(extract_patches(img, 32, 32).size() == 4);
  CHECK(extract_patches(img, 64, 64).size() == 1);
  CHECK(extract_patches(img, 64, 100).size() == 1);  // stride > extent, fits once
  CHECK(extract_patches(img, 48, 48).size() == 1);
  auto ps = extract_patches(img, 32, 32);
  // patch (1,1) comes from the lower-right corner
  CHECK(ps[3].at(0, 0, 0) == img.at(0, 32, 32));
}

TEST_CASE("corpus iteration deterministic per seed and epoch") {
  std::vector<ImageU8> patches;
  for (int i = 0; i < 17; ++i) patches.push_back(nwf::testing::random_image(8, 8, 1, 100 + i));
  CorpusIter a(patches, 4, 9);
  CorpusIter b(patches, 4, 9);
  auto ba = a.epoch_batches(2);
  auto bb = b.epoch_batches(2);
  REQUIRE(ba.size() == bb.size());
  for (size_t i = 0; i < ba.size(); ++i)
    for (size_t j = 0; j < ba[i].size(); ++j) CHECK(ba[i][j]->data == bb[i][j]->data);
  // different epoch shuffles differently
  auto b0 = a.epoch_batches(0);
  bool same = b0.size() == ba.size();
  if (same) same = b0.front().front()->data == ba.front().front()->data;
  CHECK_FALSE(same);
}

TEST_CASE("mixed-size corpus batches are single-size") {
  std::vector<ImageU8> patches;
  for (int i = 0; i < 10; ++i) patches.push_back(nwf::testing::random_image(8, 8, 1, i));
  for (int i = 0; i < 10; ++i) patches.push_back(nwf::testing::random_image(16, 16, 1, 50 + i));
  CorpusIter it(patches, 4, 1);
  size_t seen = 0;
  for (const auto& batch : it.epoch_batches(0)) {
    REQUIRE(!batch.empty());
    for (const auto* p : batch) CHECK(p->width == batch.front()->width);
    seen += batch.size();
  }
  CHECK(seen == 20);
}
