#include <cstdio>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "dtp/episode.hpp"
#include "dtp/rng.hpp"

using namespace dtp;

namespace {

EpisodeRecord make_record(uint64_t seed, int len = 40, int G = 16) {
  Rng rng(seed);
  EpisodeRecord e;
  e.schema_id = "planar_dual_v1";
  e.task = "grasp_cube";
  e.expert_mode = "left";
  e.frequency_hz = 10;
  e.image_size = G;
  e.views = 3;
  e.success = true;
  e.instructions = {"grasp the cube", {"pick up the cube", "grab the cube"}, "grasp cube"};
  for (int t = 0; t < len; ++t) {
    UnifiedVector z, a;
    for (int s : {0, 1, 10, 50, 51, 60}) {
      z.set(s, rng.normal());
      a.set(s, rng.normal());
    }
    e.z.push_back(z);
    e.a.push_back(a);
    std::vector<uint8_t> img(static_cast<size_t>(3) * G * G);
    for (auto& p : img) p = static_cast<uint8_t>(rng.uniform_int(256));
    e.images.push_back(img);
  }
  return e;
}

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("episode write/read round trip is bit-exact") {
  const std::string p1 = "/tmp/dtp_ep_a.bin", p2 = "/tmp/dtp_ep_b.bin";
  EpisodeRecord e = make_record(123);
  write_episode(p1, e);
  EpisodeRecord r = read_episode(p1);
  REQUIRE(r.length() == e.length());
  CHECK(r.schema_id == e.schema_id);
  CHECK(r.task == e.task);
  CHECK(r.expert_mode == e.expert_mode);
  CHECK(r.frequency_hz == e.frequency_hz);
  CHECK(r.success == e.success);
  CHECK(r.instructions.original == e.instructions.original);
  CHECK(r.instructions.expanded == e.instructions.expanded);
  CHECK(r.instructions.simplified == e.instructions.simplified);
  for (size_t t = 0; t < e.z.size(); ++t) {
    CHECK(std::memcmp(r.z[t].values.data(), e.z[t].values.data(), sizeof(e.z[t].values)) == 0);
    CHECK(std::memcmp(r.z[t].mask.data(), e.z[t].mask.data(), sizeof(e.z[t].mask)) == 0);
    CHECK(std::memcmp(r.a[t].values.data(), e.a[t].values.data(), sizeof(e.a[t].values)) == 0);
    CHECK(r.images[t] == e.images[t]);
  }
  // write the parsed record again: the container must be byte-stable
  write_episode(p2, r);
  CHECK(file_bytes(p1) == file_bytes(p2));
}

TEST_CASE("episode validation rejects inconsistent records") {
  EpisodeRecord e = make_record(5, 8);
  e.a.pop_back();
  CHECK_THROWS(e.validate());

  EpisodeRecord f = make_record(6, 8);
  f.images[3].pop_back();
  CHECK_THROWS(f.validate());

  EpisodeRecord g = make_record(7, 8);
  g.z[2].values[5] = 1.0;  // slot 5 is masked: values must be zero there
  CHECK_THROWS(g.validate());

  EpisodeRecord h = make_record(8, 8);
  h.z.clear();
  h.a.clear();
  h.images.clear();
  CHECK_THROWS(h.validate());
}

TEST_CASE("corrupt payloads are rejected on read") {
  const std::string p = "/tmp/dtp_ep_corrupt.bin";
  write_episode(p, make_record(9, 12));
  std::string bytes = file_bytes(p);
  {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
  }
  CHECK_THROWS(read_episode(p));
  std::remove(p.c_str());
}

TEST_CASE("missing file and bad header fail loudly") {
  CHECK_THROWS(read_episode("/tmp/definitely_not_here_dtp.bin"));
  const std::string p = "/tmp/dtp_ep_badheader.bin";
  {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f << "not json\n";
  }
  CHECK_THROWS(read_episode(p));
  std::remove(p.c_str());
}
