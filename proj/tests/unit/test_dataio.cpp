#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "bsteer/dump_io.hpp"
#include "bsteer/dynamics.hpp"
#include "bsteer/model_io.hpp"
#include "bsteer/synthetic.hpp"
#include "bsteer/traj_io.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace bsteer;
using testutil::TempDir;

namespace {

double q32(double x) { return static_cast<double>(static_cast<float>(x)); }

SafetyDataset small_dataset() {
  SafetyDataset data;
  data.dim = 3;
  data.layer_index = 12;
  Rng rng(1);
  for (int i = 0; i < 3; ++i) {
    Vec v(3);
    for (int j = 0; j < 3; ++j) v[j] = q32(rng.normal());
    data.records.push_back({v, i % 2 ? SafetyLabel::Unsafe : SafetyLabel::Safe,
                            "seq/" + std::to_string(i)});
  }
  return data;
}

}  // namespace

TEST_CASE("activation dump round-trips exactly") {
  TempDir dir("dump");
  SafetyDataset data = small_dataset();
  std::string path = dir.file("a.cbfa");
  write_dump(path, data);
  DumpReadStats stats;
  SafetyDataset back = read_dump(path, &stats);
  CHECK(stats.records_read == 3);
  CHECK(stats.rejected_nonfinite == 0);
  REQUIRE(back.records.size() == 3);
  CHECK(back.dim == 3);
  CHECK(back.layer_index == 12);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.records[i].label == data.records[i].label);
    CHECK(back.records[i].source_id == data.records[i].source_id);
    for (int j = 0; j < 3; ++j) REQUIRE(back.records[i].state[j] == data.records[i].state[j]);
  }
}

TEST_CASE("dump reader classifies malformed files") {
  TempDir dir("dumpbad");
  SafetyDataset data = small_dataset();
  std::string good = dir.file("good.cbfa");
  write_dump(good, data);
  std::string bytes = testutil::slurp(good);

  SECTION("missing file is an io error") {
    CHECK_THROWS_AS(read_dump(dir.file("nope.cbfa")), IoError);
  }
  SECTION("empty file is a format error") {
    std::string p = dir.file("empty.cbfa");
    testutil::spit(p, "");
    CHECK_THROWS(read_dump(p));
    try {
      read_dump(p);
    } catch (const FormatError&) {
      SUCCEED();
    } catch (...) {
      FAIL("expected a format error subclass");
    }
  }
  SECTION("bad magic is a format error") {
    std::string p = dir.file("magic.cbfa");
    std::string mutated = bytes;
    mutated[0] = 'X';
    testutil::spit(p, mutated);
    CHECK_THROWS_AS(read_dump(p), FormatError);
  }
  SECTION("unsupported version is a format error") {
    std::string p = dir.file("ver.cbfa");
    std::string mutated = bytes;
    mutated[4] = 99;
    testutil::spit(p, mutated);
    CHECK_THROWS_AS(read_dump(p), FormatError);
  }
  SECTION("truncation is a corruption error carrying the offset") {
    std::string p = dir.file("trunc.cbfa");
    testutil::spit(p, bytes.substr(0, bytes.size() - 5));
    try {
      read_dump(p);
      FAIL("expected corruption");
    } catch (const CorruptionError& e) {
      CHECK(e.byte_offset > 0);
      CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
  }
  SECTION("invalid label byte is a corruption error") {
    std::string p = dir.file("label.cbfa");
    std::string mutated = bytes;
    mutated[24] = 7;  // first record's label byte (4+2+2+4+4+8 = 24)
    testutil::spit(p, mutated);
    CHECK_THROWS_AS(read_dump(p), CorruptionError);
  }
  SECTION("trailing bytes are a corruption error") {
    std::string p = dir.file("trail.cbfa");
    testutil::spit(p, bytes + "zz");
    CHECK_THROWS_AS(read_dump(p), CorruptionError);
  }
}

TEST_CASE("non-finite records are skipped and counted") {
  TempDir dir("dumpnan");
  // Hand-build a dump whose second record holds a NaN component.
  detail::BinaryWriter w(dir.file("nan.cbfa"));
  w.put_bytes(kDumpMagic, 4);
  w.put<std::uint16_t>(kDumpVersion);
  w.put<std::uint16_t>(0);
  w.put<std::uint32_t>(0);  // layer
  w.put<std::uint32_t>(2);  // dim
  w.put<std::uint64_t>(2);  // records
  auto put_record = [&](float x, float y) {
    w.put<std::int8_t>(1);
    w.put<std::uint16_t>(1);
    w.put_bytes("a", 1);
    w.put<float>(x);
    w.put<float>(y);
  };
  put_record(1.0f, 2.0f);
  put_record(std::numeric_limits<float>::quiet_NaN(), 0.0f);
  w.finish();

  DumpReadStats stats;
  SafetyDataset back = read_dump(dir.file("nan.cbfa"), &stats);
  CHECK(stats.records_read == 1);
  CHECK(stats.rejected_nonfinite == 1);
  REQUIRE(back.records.size() == 1);
  CHECK(back.records[0].state[0] == 1.0);
}

TEST_CASE("json lines round-trip and reject malformed rows") {
  TempDir dir("jsonl");
  SafetyDataset data = small_dataset();
  std::string path = dir.file("d.jsonl");
  write_jsonl(path, data);
  SafetyDataset back = read_jsonl(path);
  REQUIRE(back.records.size() == data.records.size());
  CHECK(back.dim == data.dim);
  CHECK(back.layer_index == data.layer_index);
  for (std::size_t i = 0; i < back.records.size(); ++i)
    for (int j = 0; j < 3; ++j) REQUIRE(back.records[i].state[j] == data.records[i].state[j]);

  SECTION("hand-authored rows parse") {
    std::string p = dir.file("hand.jsonl");
    testutil::spit(p,
                   "{\"id\":\"x/0\",\"label\":1,\"layer\":3,\"vector\":[0.5,-1.0]}\n"
                   "\n"
                   "{\"id\":\"x/1\",\"label\":-1,\"layer\":3,\"vector\":[0.25,0.75]}\n");
    SafetyDataset hand = read_jsonl(p);
    REQUIRE(hand.records.size() == 2);
    CHECK(hand.layer_index == 3);
    CHECK(hand.records[1].label == SafetyLabel::Unsafe);
    CHECK(hand.records[1].state[1] == 0.75);
  }
  SECTION("broken json is a format error") {
    std::string p = dir.file("broken.jsonl");
    testutil::spit(p, "{\"id\":\"x\",\n");
    CHECK_THROWS_AS(read_jsonl(p), FormatError);
  }
  SECTION("bad label value is rejected") {
    std::string p = dir.file("badlabel.jsonl");
    testutil::spit(p, "{\"id\":\"x\",\"label\":2,\"layer\":0,\"vector\":[1.0,2.0]}\n");
    CHECK_THROWS(read_jsonl(p));
  }
  SECTION("mixed layers are rejected") {
    std::string p = dir.file("mixed.jsonl");
    testutil::spit(p,
                   "{\"id\":\"x\",\"label\":1,\"layer\":0,\"vector\":[1.0]}\n"
                   "{\"id\":\"y\",\"label\":1,\"layer\":1,\"vector\":[1.0]}\n");
    CHECK_THROWS_AS(read_jsonl(p), FormatError);
  }
  SECTION("inconsistent width is rejected") {
    std::string p = dir.file("width.jsonl");
    testutil::spit(p,
                   "{\"id\":\"x\",\"label\":1,\"layer\":0,\"vector\":[1.0,2.0]}\n"
                   "{\"id\":\"y\",\"label\":1,\"layer\":0,\"vector\":[1.0]}\n");
    CHECK_THROWS_AS(read_jsonl(p), FormatError);
  }
}

TEST_CASE("dataset reader dispatches on the file extension") {
  TempDir dir("dispatch");
  SafetyDataset data = small_dataset();
  write_jsonl(dir.file("d.jsonl"), data);
  write_dump(dir.file("d.cbfa"), data);
  CHECK(read_dataset(dir.file("d.jsonl")).records.size() == 3);
  CHECK(read_dataset(dir.file("d.cbfa")).records.size() == 3);
}

TEST_CASE("synthetic two-moons geometry") {
  SyntheticSpec spec;
  spec.family = SyntheticFamily::TwoMoons2D;
  spec.n_per_class = 200;
  spec.noise = 0.0;
  SafetyDataset data = generate_synthetic(spec);
  REQUIRE(data.records.size() == 400);
  CHECK(data.count(SafetyLabel::Safe) == 200);
  // All safe records precede all unsafe ones.
  for (int i = 0; i < 200; ++i) CHECK(data.records[i].label == SafetyLabel::Safe);

  for (int i = 0; i < 200; ++i) {
    const Vec& s = data.records[i].state;
    REQUIRE(std::fabs(s.norm() - 1.0) < 1e-6);          // first arc: unit circle
    REQUIRE(s[1] >= -1e-6);                             // upper half
    const Vec& u = data.records[200 + i].state;
    double dx = u[0] - 1.0, dy = u[1] - 0.6;
    REQUIRE(std::fabs(std::sqrt(dx * dx + dy * dy) - 1.0) < 1e-6);  // mirrored arc
    REQUIRE(u[1] <= 0.6 + 1e-6);                        // hangs below its offset
  }
}

TEST_CASE("synthetic families are deterministic and f32-exact") {
  for (SyntheticFamily family : {SyntheticFamily::TwoMoons2D, SyntheticFamily::GaussianClusters,
                                 SyntheticFamily::AnnulusVsCore}) {
    SyntheticSpec spec;
    spec.family = family;
    spec.n_per_class = 50;
    spec.dim = 4;
    spec.seed = 9;
    SafetyDataset a = generate_synthetic(spec);
    SafetyDataset b = generate_synthetic(spec);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
      CHECK(a.records[i].source_id == b.records[i].source_id);
      for (int j = 0; j < 4; ++j) {
        REQUIRE(a.records[i].state[j] == b.records[i].state[j]);
        // Quantized at generation: the binary dump format loses nothing.
        REQUIRE(a.records[i].state[j] == q32(a.records[i].state[j]));
      }
    }
  }
}

TEST_CASE("synthetic dump round-trip is lossless end to end") {
  TempDir dir("synthrt");
  SyntheticSpec spec;
  spec.family = SyntheticFamily::AnnulusVsCore;
  spec.n_per_class = 40;
  spec.dim = 3;
  SafetyDataset data = generate_synthetic(spec);
  write_dump(dir.file("s.cbfa"), data);
  SafetyDataset back = read_dump(dir.file("s.cbfa"));
  REQUIRE(back.records.size() == data.records.size());
  for (std::size_t i = 0; i < back.records.size(); ++i)
    for (int j = 0; j < 3; ++j) REQUIRE(back.records[i].state[j] == data.records[i].state[j]);
}

TEST_CASE("annulus radii respect the declared bands") {
  SyntheticSpec spec;
  spec.family = SyntheticFamily::AnnulusVsCore;
  spec.n_per_class = 100;
  spec.noise = 0.0;
  spec.dim = 2;
  SafetyDataset data = generate_synthetic(spec);
  for (const auto& r : data.records) {
    double radius = r.state.norm();
    if (r.label == SafetyLabel::Safe)
      REQUIRE(radius <= 0.8 + 1e-6);
    else {
      REQUIRE(radius >= 1.2 - 1e-6);
      REQUIRE(radius <= 2.0 + 1e-6);
    }
  }
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec spec;
  spec.n_per_class = 0;
  CHECK_THROWS_AS(generate_synthetic(spec), DataError);
  spec = SyntheticSpec{};
  spec.dim = 1;
  CHECK_THROWS_AS(generate_synthetic(spec), DataError);
  spec = SyntheticSpec{};
  spec.noise = -0.1;
  CHECK_THROWS_AS(generate_synthetic(spec), DataError);
  CHECK(family_from_name("two-moons") == SyntheticFamily::TwoMoons2D);
  CHECK(family_from_name("gaussian-clusters") == SyntheticFamily::GaussianClusters);
  CHECK(family_from_name("annulus-vs-core") == SyntheticFamily::AnnulusVsCore);
  CHECK_THROWS_AS(family_from_name("volcano"), DataError);
}

TEST_CASE("grouped split keeps whole sequences together") {
  SafetyDataset data;
  data.dim = 1;
  for (int g = 0; g < 400; ++g)
    for (int r = 0; r < 2; ++r) {
      Vec v(1);
      v << static_cast<double>(g);
      data.records.push_back({v, g % 2 ? SafetyLabel::Unsafe : SafetyLabel::Safe,
                              "g" + std::to_string(g)});
    }

  SplitResult sr = split(data, 0.8, 4);
  std::set<std::string> train_ids, held_ids;
  for (const auto& r : sr.train.records) train_ids.insert(r.source_id);
  for (const auto& r : sr.heldout.records) held_ids.insert(r.source_id);
  CHECK(train_ids.size() == 320);
  CHECK(held_ids.size() == 80);
  CHECK(sr.train.records.size() == 640);
  CHECK(sr.heldout.records.size() == 160);
  for (const auto& id : held_ids) CHECK(train_ids.count(id) == 0);

  SECTION("same seed, same split") {
    SplitResult again = split(data, 0.8, 4);
    REQUIRE(again.train.records.size() == sr.train.records.size());
    for (std::size_t i = 0; i < again.train.records.size(); ++i)
      CHECK(again.train.records[i].source_id == sr.train.records[i].source_id);
  }
  SECTION("different seed moves sequences") {
    SplitResult other = split(data, 0.8, 5);
    std::set<std::string> other_ids;
    for (const auto& r : other.heldout.records) other_ids.insert(r.source_id);
    CHECK(other_ids != held_ids);
  }
}

TEST_CASE("split edge cases") {
  SafetyDataset data;
  data.dim = 1;
  Vec v = Vec::Zero(1);
  data.records.push_back({v, SafetyLabel::Safe, "a"});
  data.records.push_back({v, SafetyLabel::Unsafe, "b"});
  SplitResult sr = split(data, 0.5, 1);
  CHECK(sr.train.records.size() == 1);
  CHECK(sr.heldout.records.size() == 1);

  CHECK_THROWS_AS(split(data, 0.0, 1), DataError);
  CHECK_THROWS_AS(split(data, 1.0, 1), DataError);
  data.records.pop_back();
  CHECK_THROWS_AS(split(data, 0.5, 1), DataError);
}

TEST_CASE("model container round-trips weights bitwise") {
  TempDir dir("model");
  MlpBank bank = make_mlp_bank(3, 5, {8, 4}, 42, {"tox", "pii", "jail"});
  std::string path = dir.file("m.cbfb");
  nlohmann::json tc;
  tc["epochs"] = 7;
  save_model(path, bank, tc);

  MlpBank back = load_model(path);
  REQUIRE(back.heads.size() == 3);
  CHECK(back.category_names == bank.category_names);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Vec h = oracle::random_vec(rng, 5);
    for (std::size_t k = 0; k < 3; ++k)
      REQUIRE(back.heads[k].value(h) == bank.heads[k].value(h));
  }

  SECTION("sidecar is valid json and carries the configuration") {
    std::ifstream side(path + ".json");
    REQUIRE(side.good());
    nlohmann::json sc = nlohmann::json::parse(side);
    CHECK(sc["category_names"].size() == 3);
    CHECK(sc["train_config"]["epochs"] == 7);
    CHECK(sc["format"] == "cbfb");
  }
  SECTION("missing sidecar falls back to generated names") {
    std::filesystem::remove(path + ".json");
    MlpBank anon = load_model(path);
    CHECK(anon.category_names[0] == "head0");
    Vec h = Vec::Ones(5);
    REQUIRE(anon.heads[1].value(h) == bank.heads[1].value(h));
  }
}

TEST_CASE("model container classifies malformed files") {
  TempDir dir("modelbad");
  MlpBank bank = make_mlp_bank(1, 2, {4}, 0);
  std::string path = dir.file("m.cbfb");
  save_model(path, bank);
  std::string bytes = testutil::slurp(path);

  SECTION("bad magic") {
    testutil::spit(dir.file("x.cbfb"), "AAAA" + bytes.substr(4));
    CHECK_THROWS_AS(load_model(dir.file("x.cbfb")), FormatError);
  }
  SECTION("truncated weights") {
    testutil::spit(dir.file("t.cbfb"), bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_model(dir.file("t.cbfb")), CorruptionError);
  }
  SECTION("trailing garbage") {
    testutil::spit(dir.file("g.cbfb"), bytes + "!");
    CHECK_THROWS_AS(load_model(dir.file("g.cbfb")), CorruptionError);
  }
  SECTION("missing file") {
    CHECK_THROWS_AS(load_model(dir.file("missing.cbfb")), IoError);
  }
  SECTION("empty bank refuses to save") {
    MlpBank empty;
    CHECK_THROWS_AS(save_model(dir.file("e.cbfb"), empty), DataError);
  }
}

TEST_CASE("trajectory files round-trip states in order") {
  TempDir dir("traj");
  std::vector<std::shared_ptr<const Barrier>> heads;
  heads.push_back(std::make_shared<SphereBarrier>(Vec::Zero(2), 50.0));
  BarrierBank bank(heads);
  SteeringConfig cfg;
  cfg.dt = 0.5;
  Vec h0(2);
  h0 << 0.25, -1.5;
  LatentTrajectory traj = rollout(h0, DriftToTarget{Vec::Zero(2), 0.5}, bank, cfg, 6);

  std::string path = dir.file("t.jsonl");
  write_trajectories(path, {{"run/0", traj}});
  auto groups = read_trajectory_states(path);
  REQUIRE(groups.size() == 1);
  CHECK(groups[0].first == "run/0");
  REQUIRE(groups[0].second.size() == traj.states.size());
  for (std::size_t t = 0; t < traj.states.size(); ++t)
    for (int j = 0; j < 2; ++j) REQUIRE(groups[0].second[t][j] == traj.states[t][j]);

  SECTION("records carry controls from the second state on") {
    std::ifstream in(path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      nlohmann::json obj = nlohmann::json::parse(line);
      CHECK(obj["seq"] == "run/0");
      CHECK(obj["t"] == lineno);
      CHECK(obj.contains("state"));
      CHECK(obj.contains("barriers"));
      CHECK(obj.contains("B"));
      CHECK(obj.contains("control") == (lineno > 0));
      CHECK(obj.contains("fallback") == (lineno > 0));
      ++lineno;
    }
    CHECK(lineno == 7);
  }
  SECTION("two sequences stay separate") {
    write_trajectories(dir.file("two.jsonl"), {{"a", traj}, {"b", traj}});
    auto two = read_trajectory_states(dir.file("two.jsonl"));
    REQUIRE(two.size() == 2);
    CHECK(two[0].first == "a");
    CHECK(two[1].first == "b");
    CHECK(two[0].second.size() == 7);
  }
  SECTION("time indices must match the record position") {
    testutil::spit(dir.file("bad.jsonl"),
                   "{\"seq\":\"x\",\"t\":0,\"state\":[1.0,2.0]}\n"
                   "{\"seq\":\"x\",\"t\":2,\"state\":[1.0,2.0]}\n");
    CHECK_THROWS_AS(read_trajectory_states(dir.file("bad.jsonl")), FormatError);
  }
  SECTION("states must be finite") {
    testutil::spit(dir.file("inf.jsonl"),
                   "{\"seq\":\"x\",\"t\":0,\"state\":[1.0,1e999]}\n");
    CHECK_THROWS(read_trajectory_states(dir.file("inf.jsonl")));
  }
  SECTION("empty files are format errors") {
    testutil::spit(dir.file("none.jsonl"), "");
    CHECK_THROWS_AS(read_trajectory_states(dir.file("none.jsonl")), FormatError);
  }
}
