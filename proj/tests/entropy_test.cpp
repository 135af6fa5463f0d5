#include <doctest.h>

#include <cmath>

#include "mpa/container.hpp"
#include "mpa/entropy.hpp"
#include "mpa/error.hpp"
#include "mpa/rng.hpp"

using namespace mpa;

namespace {

void check_invariants(const CdfTable& t) {
  REQUIRE(t.symbols() >= 1);
  CHECK(t.cum.front() == 0);
  CHECK(t.cum.back() == CdfTable::kTotal);
  for (std::size_t i = 1; i < t.cum.size(); ++i)
    CHECK(t.cum[i] > t.cum[i - 1]);  // every frequency at least 1
}

}  // namespace

TEST_CASE("gaussian cdf tables: invariants across parameter sweeps") {
  Rng rng(50);
  for (int trial = 0; trial < 200; ++trial) {
    double mu = rng.uniform(-40, 40);
    double sigma = std::exp(rng.uniform(std::log(0.11), std::log(60.0)));
    auto t = CdfTable::gaussian(mu, sigma);
    check_invariants(t);
    // the window straddles the mean
    CHECK(t.min_value <= int(std::floor(mu)));
    CHECK(t.max_value >= int(std::floor(mu)));
  }
  CHECK_THROWS_AS(CdfTable::gaussian(0.0, 0.0), std::invalid_argument);
}

TEST_CASE("gaussian table matches the analytic bin mass at the mean") {
  auto t = CdfTable::gaussian(0.0, 1.0);
  double got = double(t.freq(t.index_of(0))) / double(CdfTable::kTotal);
  double want = std::erf(0.5 / std::sqrt(2.0));  // Phi(0.5) - Phi(-0.5)
  CHECK(got == doctest::Approx(want).epsilon(1e-3));
  CHECK(got == doctest::Approx(0.3829).epsilon(1e-3));
  // symmetric neighbours
  CHECK(t.freq(t.index_of(1)) == t.freq(t.index_of(-1)));
  CHECK(t.freq(t.index_of(2)) == t.freq(t.index_of(-2)));
}

TEST_CASE("narrow gaussian concentrates on one bin") {
  auto t = CdfTable::gaussian(0.0, 0.11);
  double got = double(t.freq(t.index_of(0))) / double(CdfTable::kTotal);
  double want = std::erf(0.5 / (0.11 * std::sqrt(2.0)));
  CHECK(got == doctest::Approx(want).epsilon(1e-3));
  CHECK(got > 0.99);
}

TEST_CASE("logistic cdf tables") {
  Rng rng(51);
  for (int trial = 0; trial < 100; ++trial) {
    double loc = rng.uniform(-10, 10);
    double scale = std::exp(rng.uniform(std::log(0.05), std::log(20.0)));
    auto t = CdfTable::logistic(loc, scale);
    check_invariants(t);
  }
  auto t = CdfTable::logistic(0.0, 1.0);
  double got = double(t.freq(t.index_of(0))) / double(CdfTable::kTotal);
  double want = 1.0 / (1.0 + std::exp(-0.5)) - 1.0 / (1.0 + std::exp(0.5));
  CHECK(got == doctest::Approx(want).epsilon(1e-3));
  CHECK_THROWS_AS(CdfTable::logistic(0.0, -1.0), std::invalid_argument);
}

TEST_CASE("empty stream flushes to five bytes and decodes to nothing") {
  RangeEncoder enc;
  auto bytes = enc.finish();
  CHECK(bytes.size() == 5);
  RangeDecoder dec(bytes);  // consumes exactly the flush bytes
  CHECK(dec.consumed() == 5);
  CHECK_THROWS_AS(enc.finish(), std::logic_error);
}

TEST_CASE("roundtrip fuzz over mixed tables and escape symbols") {
  Rng rng(52);
  for (int block = 0; block < 20; ++block) {
    // a few tables shared within the block, like per-element coding
    std::vector<CdfTable> tables;
    for (int i = 0; i < 4; ++i)
      tables.push_back(CdfTable::gaussian(rng.uniform(-8, 8),
                                          std::exp(rng.uniform(std::log(0.11), std::log(10.0)))));
    tables.push_back(CdfTable::logistic(rng.uniform(-2, 2), rng.uniform(0.3, 3.0)));

    std::vector<int> table_of, values;
    for (int i = 0; i < 500; ++i) {
      int ti = int(rng.below(tables.size()));
      const auto& t = tables[ti];
      int v;
      switch (rng.below(10)) {
        case 0: v = t.max_value + 1 + int(rng.below(2000));  break;  // escape high
        case 1: v = t.min_value - 1 - int(rng.below(2000));  break;  // escape low
        default: v = t.min_value + int(rng.below(std::uint64_t(t.symbols())));
      }
      table_of.push_back(ti);
      values.push_back(v);
    }

    RangeEncoder enc;
    for (std::size_t i = 0; i < values.size(); ++i) enc.encode(tables[table_of[i]], values[i]);
    auto bytes = enc.finish();

    RangeDecoder dec(bytes);
    for (std::size_t i = 0; i < values.size(); ++i)
      REQUIRE(dec.decode(tables[table_of[i]]) == values[i]);
    CHECK(dec.consumed() == bytes.size());
  }
}

TEST_CASE("ten thousand symbols code within one percent of the table entropy") {
  Rng rng(53);
  auto table = CdfTable::gaussian(0.0, 2.5);
  std::vector<int> symbols;
  double ideal_bits = 0;
  for (int i = 0; i < 10000; ++i) {
    int v = int(std::lround(rng.normal(0.0, 2.5)));
    symbols.push_back(v);
    int idx = table.index_of(v);
    ideal_bits += -std::log2(double(table.freq(idx)) / double(CdfTable::kTotal));
  }
  RangeEncoder enc;
  for (int v : symbols) enc.encode(table, v);
  auto bytes = enc.finish();
  double actual_bits = double(bytes.size()) * 8.0;
  CHECK(actual_bits >= ideal_bits);  // entropy is a lower bound
  CHECK(actual_bits <= ideal_bits * 1.01 + 64.0);

  RangeDecoder dec(bytes);
  for (int v : symbols) REQUIRE(dec.decode(table) == v);
}

TEST_CASE("identical inputs produce identical bytes") {
  auto run = [] {
    Rng rng(54);
    auto t = CdfTable::gaussian(1.3, 0.9);
    RangeEncoder enc;
    for (int i = 0; i < 256; ++i) enc.encode(t, int(std::lround(rng.normal(1.3, 0.9))));
    return enc.finish();
  };
  CHECK(run() == run());
}

TEST_CASE("corrupted streams raise format errors with a byte position") {
  auto t = CdfTable::gaussian(0.0, 1.0);
  RangeEncoder enc;
  for (int i = 0; i < 50; ++i) enc.encode(t, i % 3 - 1);
  auto bytes = enc.finish();

  // truncation: decoding eventually runs off the end
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 6);
  RangeDecoder dec(cut);
  CHECK_THROWS_AS(
      [&] {
        for (int i = 0; i < 50; ++i) dec.decode(t);
      }(),
      FormatError);

  // a stream that does not start with the zero byte
  auto mangled = bytes;
  mangled[0] = 0x7F;
  CHECK_THROWS_AS(RangeDecoder{mangled}, FormatError);

  try {
    std::vector<std::uint8_t> tiny(bytes.begin(), bytes.begin() + 2);
    RangeDecoder d2(tiny);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }
}

TEST_CASE("uniform table roundtrip") {
  auto t = CdfTable::uniform(-5, 5);
  check_invariants(t);
  RangeEncoder enc;
  for (int v = -5; v <= 5; ++v) enc.encode(t, v);
  auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (int v = -5; v <= 5; ++v) CHECK(dec.decode(t) == v);
}

TEST_CASE("container header layout and roundtrip") {
  Container c;
  c.q = quantize_quality(3.14159, 8.0);
  CHECK(c.q == doctest::Approx(804.0 / 256.0).epsilon(1e-15));
  c.width = 129;
  c.height = 65;
  c.z_bytes = {1, 2, 3};
  c.y_bytes = {9, 8, 7, 6, 5};
  auto bytes = write_container(c);
  CHECK(bytes.size() == kContainerHeaderBytes + c.z_bytes.size() + c.y_bytes.size());
  CHECK(bytes[0] == 'M');
  CHECK(bytes[1] == 'P');
  CHECK(bytes[2] == 'A');
  CHECK(bytes[3] == '1');

  auto back = parse_container(bytes);
  CHECK(back.q == c.q);
  CHECK(back.width == c.width);
  CHECK(back.height == c.height);
  CHECK(back.z_bytes == c.z_bytes);
  CHECK(back.y_bytes == c.y_bytes);
}

TEST_CASE("container rejects malformed bytes") {
  Container c;
  c.q = 1.0;
  c.width = 8;
  c.height = 8;
  c.z_bytes = {1};
  c.y_bytes = {2, 3};
  auto bytes = write_container(c);

  auto bad_magic = bytes;
  bad_magic[2] = 'X';
  CHECK_THROWS_AS(parse_container(bad_magic), FormatError);

  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(parse_container(bad_version), FormatError);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 2);
  CHECK_THROWS_AS(parse_container(truncated), FormatError);

  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(parse_container(trailing), FormatError);

  CHECK_THROWS_AS(quantize_quality(0.5, 8.0), ConfigError);
  CHECK_THROWS_AS(quantize_quality(8.5, 8.0), ConfigError);
}
