#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <fstream>

#include "dipli/image.hpp"
#include "dipli/image_io.hpp"
#include "test_util.hpp"

using namespace dipli;

namespace {

void write_bytes(const std::string& path, const std::vector<unsigned char>& b) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(b.data()),
          static_cast<std::streamsize>(b.size()));
}

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("pgm 8-bit read scales by 255") {
  TempDir dir;
  const std::string header = "P5\n2 2\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  for (unsigned char v : {0, 128, 255, 64}) bytes.push_back(v);
  write_bytes(dir.file("a.pgm"), bytes);

  const Image img = read_image(dir.file("a.pgm"));
  REQUIRE(img.channels == 1);
  REQUIRE(img.height == 2);
  REQUIRE(img.width == 2);
  REQUIRE(img.data[0] == 0.0);
  REQUIRE(img.data[1] == Catch::Approx(128.0 / 255.0).epsilon(1e-12));
  REQUIRE(img.data[2] == 1.0);
  REQUIRE(img.data[3] == Catch::Approx(64.0 / 255.0).epsilon(1e-12));
}

TEST_CASE("pgm truncated payload names the byte offset") {
  TempDir dir;
  const std::string header = "P5\n2 2\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  for (unsigned char v : {0, 128, 255}) bytes.push_back(v);  // one short
  write_bytes(dir.file("t.pgm"), bytes);
  try {
    read_image(dir.file("t.pgm"));
    FAIL("expected TruncatedData");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrorCode::TruncatedData);
    REQUIRE(std::string(e.what()).find("byte offset") != std::string::npos);
  }
}

TEST_CASE("pgm 16-bit is big-endian and scales by maxval") {
  TempDir dir;
  const std::string header = "P5\n1 1\n65535\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  bytes.push_back(0x80);
  bytes.push_back(0x00);
  write_bytes(dir.file("w.pgm"), bytes);
  const Image img = read_image(dir.file("w.pgm"));
  REQUIRE(img.data[0] == Catch::Approx(32768.0 / 65535.0).epsilon(1e-12));
}

TEST_CASE("unknown magic reports offset 0") {
  TempDir dir;
  write_bytes(dir.file("x.bin"), {'X', 'Y', 0, 1});
  try {
    read_image(dir.file("x.bin"));
    FAIL("expected UnknownFormat");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrorCode::UnknownFormat);
    REQUIRE(std::string(e.what()).find("byte offset 0") != std::string::npos);
  }
}

TEST_CASE("pgm write rounds half up and clamps negatives") {
  TempDir dir;
  Image img(1, 1, 2);
  img.data = {0.5, -0.25};
  write_image(img, dir.file("q.pgm"), ImageFormat::Pgm);
  const auto bytes = slurp(dir.file("q.pgm"));
  REQUIRE(bytes[bytes.size() - 2] == 128);  // 0.5 * 255 = 127.5 -> 128
  REQUIRE(bytes[bytes.size() - 1] == 0);
  const Image back = read_image(dir.file("q.pgm"));
  REQUIRE(std::abs(back.data[0] - 0.5) <= 0.5 / 255.0);
}

TEST_CASE("pfm file round-trips byte-for-byte through read then write") {
  TempDir dir;
  // Little-endian grayscale PFM, scale -1.0, 2x2.
  std::string header = "Pf\n2 2\n-1.0\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  const float vals[4] = {0.125f, -0.5f, 1.25f, 0.75f};
  for (float v : vals) {
    unsigned char buf[4];
    std::memcpy(buf, &v, 4);
    bytes.insert(bytes.end(), buf, buf + 4);
  }
  write_bytes(dir.file("a.pfm"), bytes);

  const Image img = read_image(dir.file("a.pfm"));
  // Bottom row first in the file: samples land in the top rows last.
  REQUIRE(img.at(0, 1, 0) == 0.125);
  REQUIRE(img.at(0, 1, 1) == -0.5);  // PFM carries negatives through
  REQUIRE(img.at(0, 0, 0) == 1.25);

  write_image(img, dir.file("b.pfm"), ImageFormat::Pfm);
  REQUIRE(slurp(dir.file("b.pfm")) == bytes);
}

TEST_CASE("pfm round-trip is bit-exact for float-representable images") {
  TempDir dir;
  Image img = random_image(3, 6, 5, 11);
  for (double& v : img.data) v = static_cast<float>(v * 2.0 - 0.5);
  write_image(img, dir.file("c.pfm"), ImageFormat::Pfm);
  const Image back = read_image(dir.file("c.pfm"));
  REQUIRE(back.channels == img.channels);
  REQUIRE(back.data == img.data);
  // Idempotence: a second trip changes nothing, byte-for-byte.
  write_image(back, dir.file("d.pfm"), ImageFormat::Pfm);
  REQUIRE(slurp(dir.file("c.pfm")) == slurp(dir.file("d.pfm")));
}

TEST_CASE("png 8 and 16 bit round-trip within quantization error") {
  TempDir dir;
  const Image img = random_image(3, 9, 7, 5);
  write_image(img, dir.file("a.png"), ImageFormat::Png);
  const Image b8 = read_image(dir.file("a.png"));
  REQUIRE(b8.channels == 3);
  for (size_t i = 0; i < img.size(); ++i)
    REQUIRE(std::abs(b8.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);

  write_image(img, dir.file("b.png"), ImageFormat::Png16);
  const Image b16 = read_image(dir.file("b.png"));
  for (size_t i = 0; i < img.size(); ++i)
    REQUIRE(std::abs(b16.data[i] - img.data[i]) <= 0.5 / 65535.0 + 1e-12);
}

TEST_CASE("gray png round-trips") {
  TempDir dir;
  const Image img = random_image(1, 8, 8, 6);
  write_image(img, dir.file("g.png"), ImageFormat::Png16);
  const Image back = read_image(dir.file("g.png"));
  REQUIRE(back.channels == 1);
  for (size_t i = 0; i < img.size(); ++i)
    REQUIRE(std::abs(back.data[i] - img.data[i]) <= 0.5 / 65535.0 + 1e-12);
}

TEST_CASE("corrupt pgm header is rejected with offset") {
  TempDir dir;
  write_bytes(dir.file("h.pgm"), {'P', '5', '\n', 'a', 'b', 'c'});
  try {
    read_image(dir.file("h.pgm"));
    FAIL("expected CorruptHeader");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrorCode::CorruptHeader);
  }
}
