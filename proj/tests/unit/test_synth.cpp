#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "layerscope/fepoid.hpp"
#include "layerscope/idest.hpp"
#include "layerscope/synth.hpp"
#include "test_support.hpp"

using namespace layerscope;

TEST_CASE("generation is deterministic in the seed") {
  SynthSpec spec;
  spec.samples = 300;
  spec.dim = 16;
  const SynthData a = generate(spec), b = generate(spec);
  REQUIRE(a.layers.size() == 8);
  for (std::size_t l = 0; l < 8; ++l) CHECK(a.layers[l] == b.layers[l]);
  CHECK(a.meta == b.meta);
  spec.seed = 1;
  CHECK_FALSE(generate(spec).layers[0] == a.layers[0]);
}

TEST_CASE("metadata is balanced and split") {
  SynthSpec spec;
  spec.samples = 1000;
  spec.dim = 16;
  const SynthData data = generate(spec);
  std::size_t positives = 0, train = 0, val = 0;
  for (const SampleMeta& m : data.meta) {
    positives += static_cast<std::size_t>(m.label);
    train += m.split == Split::train;
    val += m.split == Split::val;
  }
  CHECK(positives == 500);
  CHECK(train == 600);
  CHECK(val == 200);
  CHECK(data.meta[0].id == "s000001");
}

TEST_CASE("intrinsic dimension follows the profile") {
  SynthSpec spec;
  spec.layers = 3;
  spec.samples = 1500;
  spec.dim = 24;
  spec.id_profile = {2, 6, 3};
  spec.signal_layer = 2;
  spec.margin = 0.0;
  const SynthData data = generate(spec);
  std::vector<double> ids;
  for (const FloatMatrix& z : data.layers) ids.push_back(twonn(z.cast<double>()).d_id);
  CHECK(ids[0] < ids[2]);
  CHECK(ids[2] < ids[1]);
  CHECK(fepoid_select(ids, 7) == 2);
}

TEST_CASE("invalid specs are rejected") {
  SynthSpec spec;
  spec.dim = 4;
  CHECK_THROWS_AS(generate(spec), Error);
  spec = {};
  spec.id_profile = {1, 2};
  CHECK_THROWS_AS(generate(spec), Error);
  spec = {};
  spec.signal_layer = 9;
  CHECK_THROWS_AS(generate(spec), Error);
  spec = {};
  spec.train_fraction = 0.9;
  CHECK_THROWS_AS(generate(spec), Error);
}

TEST_CASE("files on disk") {
  testing::TempDir tmp("synth");
  SynthSpec spec;
  spec.layers = 2;
  spec.samples = 50;
  spec.dim = 8;
  spec.id_profile = {2, 3};
  spec.signal_layer = 1;
  spec.traj_tokens = 6;
  spec.traj_samples = 10;
  write_synth(spec, tmp / "d.lhsd", tmp / "d.meta.jsonl", tmp / "t.lhtd");
  const LayerDump dump = read_layer_dump(tmp / "d.lhsd");
  CHECK(dump.n_samples() == 50);
  CHECK(dump.n_layers() == 2);
  CHECK(read_meta(tmp / "d.meta.jsonl", 50).size() == 50);
  const auto traj = read_all_trajectories(tmp / "t.lhtd");
  REQUIRE(traj.size() == 10);
  CHECK(traj[0].n_tokens == 6);
  CHECK(traj[0].layers[1].cols() == 8);
}
