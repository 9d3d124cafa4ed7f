#include <doctest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "sppr/checkpoint.hpp"

using namespace sppr;

namespace {

// Bitwise CRC-32 (reflected, polynomial 0xEDB88320).
std::uint32_t crc32_reference(std::string_view bytes) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (unsigned char c : bytes) {
    crc ^= c;
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string failure_of(std::string_view bytes) {
  try {
    parse_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("byte layout matches a hand-built file") {
  Checkpoint cp{{"net", {{"w", {2, 1}, {1.5, -0.25}}}}};
  std::string expect = "SPPR";
  put_le(expect, 1, 4);
  put_le(expect, 1, 1);
  put_le(expect, 3, 2);
  expect += "net";
  put_le(expect, 1, 4);
  put_le(expect, 1, 2);
  expect += "w";
  put_le(expect, 2, 1);
  put_le(expect, 2, 4);
  put_le(expect, 1, 4);
  put_le(expect, std::bit_cast<std::uint64_t>(1.5), 8);
  put_le(expect, std::bit_cast<std::uint64_t>(-0.25), 8);
  put_le(expect, crc32_reference(expect), 4);
  CHECK(serialize_checkpoint(cp) == expect);
  CHECK(parse_checkpoint(expect) == cp);
}

TEST_CASE("empty network list is header plus CRC") {
  const std::string bytes = serialize_checkpoint({});
  CHECK(bytes.size() == 4 + 4 + 1 + 4);
  CHECK(bytes.substr(0, 4) == "SPPR");
  CHECK(parse_checkpoint(bytes).empty());
}

TEST_CASE("round trips are bit-exact") {
  const auto cfg = releaser_config(8, 0.25);
  ModelParams p = init_params(cfg, 3);
  // Values that only survive an exact encoding.
  auto w = p.head_bias.mutable_values();
  w[0] = std::numeric_limits<double>::denorm_min();
  Checkpoint cp{to_checkpoint("releaser", p),
                to_checkpoint("adversary", init_params(adversary_config(0.25), 4))};

  auto dir = std::filesystem::temp_directory_path() / "sppr_test_checkpoint";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "a.sppr", cp);
  CHECK_FALSE(std::filesystem::exists(dir / "a.sppr.tmp"));
  Checkpoint back = load_checkpoint(dir / "a.sppr");
  CHECK(back == cp);
  save_checkpoint(dir / "b.sppr", back);
  CHECK(read_file(dir / "a.sppr") == read_file(dir / "b.sppr"));

  const CheckpointNetwork* net = find_network(back, "releaser");
  REQUIRE(net != nullptr);
  CHECK(find_network(back, "utility") == nullptr);
  ModelParams q = params_from_checkpoint(*net, cfg);
  CHECK(q.checksum() == p.checksum());
  for (const auto& t : q.tensors()) CHECK(t.tracked());

  // Forward passes agree bit for bit.
  std::vector<double> in(2 * 5 * cfg.input_dim);
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = 0.01 * static_cast<double>(i % 17);
  Tensor seq = Tensor::from({2, 5, cfg.input_dim}, in);
  Tensor a = stack_forward(seq, p), b = stack_forward(seq, q);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a.values()[i] == b.values()[i]);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.sppr"), CheckpointError);
}

TEST_CASE("corruption is rejected with a named reason") {
  Checkpoint cp{to_checkpoint("adversary", init_params(adversary_config(0.25), 1))};
  const std::string good = serialize_checkpoint(cp);

  std::string crc = good;
  crc.back() = static_cast<char>(crc.back() ^ 0x01);
  CHECK(failure_of(crc).find("CRC") != std::string::npos);

  std::string body = good;
  body[40] = static_cast<char>(body[40] ^ 0x40);
  CHECK(failure_of(body).find("CRC") != std::string::npos);

  std::string magic = good;
  magic[0] = 'X';
  CHECK(failure_of(magic).find("magic") != std::string::npos);

  std::string version = good.substr(0, good.size() - 4);
  version[4] = 2;
  put_le(version, crc32_reference(version), 4);
  CHECK(failure_of(version).find("version") != std::string::npos);

  CHECK(failure_of(good.substr(0, 6)).find("truncated") != std::string::npos);

  // Internally truncated but with a valid CRC.
  std::string cut = good.substr(0, 60);
  put_le(cut, crc32_reference(cut), 4);
  CHECK_FALSE(failure_of(cut).empty());

  std::string trailing = good.substr(0, good.size() - 4) + "x";
  put_le(trailing, crc32_reference(trailing), 4);
  CHECK_FALSE(failure_of(trailing).empty());
}

TEST_CASE("configuration mismatches name the tensor") {
  CheckpointNetwork net = to_checkpoint("releaser", init_params(releaser_config(8, 0.5), 2));
  try {
    params_from_checkpoint(net, releaser_config(8, 1.0));
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    const std::string what = e.what();
    CHECK(what.find("layer0.weight") != std::string::npos);
    CHECK(what.find("[42x128]") != std::string::npos);
    CHECK(what.find("[74x256]") != std::string::npos);
  }
  CheckpointNetwork missing = net;
  missing.tensors.pop_back();
  try {
    params_from_checkpoint(missing, releaser_config(8, 0.5));
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("head.bias") != std::string::npos);
  }
}
