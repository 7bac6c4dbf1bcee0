#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "adaptct/checkpoint.hpp"
#include "adaptct/phantom_io.hpp"

using namespace adaptct;

namespace {

RunConfig small_config() {
  return parse_config("version = 1\ndata.image_size = 16\nnet.hidden = 16\nrecon.iterations = 5\n");
}

Checkpoint trained_checkpoint(int episodes) {
  const RunConfig cfg = small_config();
  DatasetSpec ds = cfg.train_dataset();
  ds.count = 5;
  auto data = std::make_shared<std::vector<Phantom>>(generate_dataset(ds));
  auto env = std::make_shared<Environment>(std::make_shared<Projector>(cfg.geometry()), cfg.recon, cfg.env.reward_mode);
  Trainer t(env, data, cfg.train_config(), init_trainer_state(cfg.agent_config(), cfg.train_config()));
  t.train(episodes);
  return {resolved_config_text(cfg), t.state()};
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("adaptct_test_" + name);
}

}  // namespace

TEST(Fnv1a, ReferenceVectors) {
  auto h = [](const char* s) { return io::fnv1a64(reinterpret_cast<const std::uint8_t*>(s), std::strlen(s)); };
  EXPECT_EQ(h(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(h("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(h("foobar"), 0x85944171f73967e8ULL);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const Checkpoint ck = trained_checkpoint(3);
  ASSERT_EQ(ck.state.episode, 3u);
  ASSERT_EQ(ck.state.policy_opt.t, 9u);
  const auto bytes = encode_checkpoint(ck);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_TRUE(back == ck);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  // the restored rng continues the same stream
  Rng a = ck.state.rng, b = back.state.rng;
  for (int k = 0; k < 100; ++k) ASSERT_EQ(a(), b());
}

TEST(Checkpoint, FileRoundTrip) {
  const Checkpoint ck = trained_checkpoint(1);
  const auto path = temp_file("ck.ctac");
  save_checkpoint(path.string(), ck);
  EXPECT_TRUE(load_checkpoint(path.string()) == ck);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path.string()), FormatError);
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = encode_checkpoint(trained_checkpoint(0));
  ASSERT_GT(bytes.size(), 24u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CTAC");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
  std::uint64_t size = 0;
  for (int i = 0; i < 8; ++i) size |= static_cast<std::uint64_t>(bytes[8 + i]) << (8 * i);
  EXPECT_EQ(size + 24, bytes.size());
}

TEST(Checkpoint, EveryFlippedByteIsDetected) {
  const auto bytes = encode_checkpoint(trained_checkpoint(1));
  // header, payload start, middle, checksum
  for (std::size_t pos : {std::size_t{0}, std::size_t{4}, std::size_t{9}, std::size_t{16}, std::size_t{40},
                          bytes.size() / 2, bytes.size() - 9, bytes.size() - 1}) {
    auto bad = bytes;
    bad[pos] ^= 0x5a;
    EXPECT_THROW(decode_checkpoint(bad), FormatError) << pos;
  }
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    auto bad = bytes;
    bad[uniform_index(rng, bad.size())] ^= static_cast<std::uint8_t>(1 + uniform_index(rng, 255));
    EXPECT_THROW(decode_checkpoint(bad), FormatError);
  }
}

TEST(Checkpoint, TruncationAndPaddingAreDetected) {
  const auto bytes = encode_checkpoint(trained_checkpoint(0));
  for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{20}, bytes.size() - 1}) {
    EXPECT_THROW(decode_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + keep)), FormatError) << keep;
  }
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(decode_checkpoint(longer), FormatError);
}

TEST(Checkpoint, ResumedTrainingMatchesUnpaused) {
  const RunConfig cfg = small_config();
  DatasetSpec ds = cfg.train_dataset();
  ds.count = 5;
  auto data = std::make_shared<std::vector<Phantom>>(generate_dataset(ds));
  auto env = std::make_shared<Environment>(std::make_shared<Projector>(cfg.geometry()), cfg.recon, cfg.env.reward_mode);
  Trainer whole(env, data, cfg.train_config(), init_trainer_state(cfg.agent_config(), cfg.train_config()));
  const auto all = whole.train(6);
  Trainer first(env, data, cfg.train_config(), init_trainer_state(cfg.agent_config(), cfg.train_config()));
  auto part = first.train(2);
  const Checkpoint ck = decode_checkpoint(encode_checkpoint({resolved_config_text(cfg), first.state()}));
  Trainer second(env, data, cfg.train_config(), ck.state);
  const auto rest = second.train(4);
  part.insert(part.end(), rest.begin(), rest.end());
  EXPECT_EQ(part, all);
  EXPECT_EQ(second.state().params, whole.state().params);
}

TEST(PhantomContainer, RoundTripAndLayout) {
  DatasetSpec ds;
  ds.image_size = 12;
  ds.count = 4;
  ds.shape_kinds = {ShapeKind::circle, ShapeKind::ellipse, ShapeKind::triangle, ShapeKind::pentagon};
  const auto phantoms = generate_dataset(ds);
  const auto bytes = encode_phantoms(phantoms, 12);
  EXPECT_EQ(bytes.size(), 20u + 4u * (41u + 144u));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CTPH");
  EXPECT_EQ(bytes[12], 4);  // count, little-endian
  const PhantomCorpus back = decode_phantoms(bytes);
  EXPECT_EQ(back.image_size, 12);
  ASSERT_EQ(back.phantoms.size(), phantoms.size());
  for (std::size_t k = 0; k < phantoms.size(); ++k) {
    EXPECT_EQ(back.phantoms[k].image, phantoms[k].image);
    EXPECT_EQ(back.phantoms[k].spec.kind, phantoms[k].spec.kind);
    EXPECT_EQ(back.phantoms[k].spec.rotation_deg, phantoms[k].spec.rotation_deg);
    EXPECT_EQ(back.phantoms[k].spec.center_x, phantoms[k].spec.center_x);
  }
  EXPECT_EQ(encode_phantoms(back.phantoms, 12), bytes);
}

TEST(PhantomContainer, RejectsDamage) {
  DatasetSpec ds;
  ds.image_size = 8;
  ds.count = 2;
  const auto bytes = encode_phantoms(generate_dataset(ds), 8);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_phantoms(bad_magic), FormatError);
  EXPECT_THROW(decode_phantoms({bytes.begin(), bytes.end() - 1}), FormatError);
  auto bad_pixel = bytes;
  bad_pixel.back() = 2;
  EXPECT_THROW(decode_phantoms(bad_pixel), FormatError);
  auto bad_kind = bytes;
  bad_kind[20] = 9;
  EXPECT_THROW(decode_phantoms(bad_kind), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_phantoms(extra), FormatError);
  EXPECT_THROW(encode_phantoms(generate_dataset(ds), 9), DomainError);
}
