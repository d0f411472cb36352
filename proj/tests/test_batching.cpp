#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "herdid/batching.hpp"
#include "herdid/error.hpp"
#include "herdid/simulate.hpp"
#include "test_support.hpp"

using namespace herdid;

namespace {

// Layout invariants checked against the provenance table and the dataset.
void check_layout(const EmbeddingDataset& ds, const TrainingBatch& batch) {
  const std::size_t n = batch.size();
  REQUIRE(n % 2 == 0);
  REQUIRE(static_cast<std::size_t>(batch.features.rows()) == n);
  const std::size_t h = batch.half();
  for (std::size_t i = 0; i < h; ++i) {
    const auto& a = batch.rows[i];
    const auto& b = batch.rows[i + h];
    CHECK(a.record == b.record);
    CHECK(a.frame_slot == b.frame_slot);
    CHECK(a.view_slot == 1);
    CHECK(b.view_slot == 2);
    CHECK(a.stored_view != b.stored_view);
    CHECK(a.detection_idx == ds.records()[a.record].detection_idx);
  }
  // Frames are contiguous and ordered by slot within each half.
  const auto offsets = batch.frame_offsets();
  for (std::size_t slot = 0; slot < batch.frame_sizes.size(); ++slot) {
    for (std::size_t k = 0; k < batch.frame_sizes[slot]; ++k) {
      CHECK(batch.rows[offsets[slot] + k].frame_slot == slot);
    }
  }
  // Each feature row is exactly the stored view it claims to be.
  for (std::size_t i = 0; i < n; ++i) {
    const auto stored = ds.view(batch.rows[i].record, batch.rows[i].stored_view);
    for (std::size_t c = 0; c < stored.size(); ++c) {
      REQUIRE(batch.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) == stored[c]);
    }
  }
}

}  // namespace

TEST_CASE("two full frames give forty rows") {
  const auto ds = testing::toy_dataset({10, 10}, 4, 2, 1);
  BatchSampler sampler(UnlabeledView(ds), {2, 3});
  const auto batch = sampler.next();
  CHECK(batch.size() == 40);
  check_layout(ds, batch);
}

TEST_CASE("frames of three and five detections give sixteen rows") {
  const auto ds = testing::toy_dataset({3, 5}, 4, 2, 1);
  Rng rng(0);
  const std::vector<std::size_t> frames = {0, 1};
  const auto batch = assemble_batch(UnlabeledView(ds), frames, rng);
  CHECK(batch.size() == 16);
  CHECK(batch.frame_sizes == std::vector<std::size_t>{3, 5});
  CHECK(batch.frame_offsets() == std::vector<std::size_t>{0, 3});
  check_layout(ds, batch);
}

TEST_CASE("with two stored views both are used in random order") {
  const auto ds = testing::toy_dataset({4, 4, 4}, 3, 2, 2);
  BatchSampler sampler(UnlabeledView(ds), {2, 9});
  std::size_t first_is_zero = 0, total = 0;
  for (int i = 0; i < 200; ++i) {
    const auto batch = sampler.next();
    check_layout(ds, batch);
    for (std::size_t r = 0; r < batch.half(); ++r) {
      first_is_zero += batch.rows[r].stored_view == 0;
      ++total;
    }
  }
  const double frac = static_cast<double>(first_is_zero) / static_cast<double>(total);
  CHECK(frac > 0.45);
  CHECK(frac < 0.55);
}

TEST_CASE("with more stored views every pair can be drawn") {
  const auto ds = testing::toy_dataset({2, 3}, 2, 4, 3);
  BatchSampler sampler(UnlabeledView(ds), {2, 4});
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  for (int i = 0; i < 300; ++i) {
    const auto batch = sampler.next();
    check_layout(ds, batch);
    for (std::size_t r = 0; r < batch.half(); ++r) {
      seen.emplace(batch.rows[r].stored_view, batch.rows[r + batch.half()].stored_view);
    }
  }
  CHECK(seen.size() == 12);
}

TEST_CASE("layout holds on simulated batches with partial visibility") {
  SimConfig cfg;
  cfg.n_identities = 6;
  cfg.n_frames = 50;
  cfg.embedding_dim = 8;
  cfg.views_per_detection = 3;
  cfg.visibility_prob = 0.5;
  cfg.seed = 4;
  const auto ds = generate(cfg);
  for (std::size_t k : {2u, 3u, 5u}) {
    BatchSampler sampler(UnlabeledView(ds), {k, 11});
    for (int i = 0; i < 20; ++i) {
      const auto batch = sampler.next();
      CHECK(batch.frame_sizes.size() == k);
      std::size_t total = 0;
      for (auto s : batch.frame_sizes) total += s;
      CHECK(batch.size() == 2 * total);
      check_layout(ds, batch);
    }
  }
}

TEST_CASE("sampling is deterministic given the seed") {
  const auto ds = testing::toy_dataset({2, 3, 4, 1, 5}, 3, 3, 5);
  BatchSampler a(UnlabeledView(ds), {2, 77});
  BatchSampler b(UnlabeledView(ds), {2, 77});
  BatchSampler c(UnlabeledView(ds), {2, 78});
  bool differs = false;
  for (int i = 0; i < 30; ++i) {
    const auto ba = a.next();
    const auto bb = b.next();
    const auto bc = c.next();
    CHECK(ba.features == bb.features);
    differs = differs || ba.features.rows() != bc.features.rows() || ba.features != bc.features;
  }
  CHECK(differs);
}

TEST_CASE("insufficient frames") {
  const auto ds = testing::toy_dataset({3}, 2, 2, 1);
  try {
    BatchSampler sampler(UnlabeledView(ds), {2, 0});
    FAIL("expected insufficient-data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInsufficientData);
  }
  const auto two = testing::toy_dataset({3, 1}, 2, 2, 1);
  CHECK_THROWS_AS(BatchSampler(UnlabeledView(two), {3, 0}), Error);
  CHECK_THROWS_AS(BatchSampler(UnlabeledView(two), {1, 0}), Error);
  CHECK_NOTHROW(BatchSampler(UnlabeledView(two), {2, 0}));
}

TEST_CASE("each epoch covers every frame and draws distinct frames per batch") {
  const auto ds = testing::toy_dataset(std::vector<std::size_t>(7, 2), 2, 2, 1);
  BatchSampler sampler(UnlabeledView(ds), {3, 5});
  CHECK(sampler.usable_frames() == 7);
  CHECK(sampler.batches_per_epoch() == 3);
  for (int epoch = 0; epoch < 10; ++epoch) {
    std::set<std::size_t> seen;
    for (std::size_t b = 0; b < sampler.batches_per_epoch(); ++b) {
      const auto frames = sampler.next_frames();
      CHECK(frames.size() == 3);
      CHECK(std::set<std::size_t>(frames.begin(), frames.end()).size() == 3);
      seen.insert(frames.begin(), frames.end());
    }
    CHECK(seen.size() == 7);
  }
}

TEST_CASE("frames appear with equal frequency") {
  // 21 frames and K = 2 so the topped-up last batch adds randomness.
  const std::size_t frames = 21;
  const auto ds = testing::toy_dataset(std::vector<std::size_t>(frames, 1), 2, 2, 1);
  BatchSampler sampler(UnlabeledView(ds), {2, 12});
  std::vector<double> counts(frames, 0.0);
  const int batches = 20000;
  for (int i = 0; i < batches; ++i) {
    for (auto f : sampler.next_frames()) counts[f] += 1.0;
  }
  const double expected = 2.0 * batches / frames;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 20 degrees of freedom; 45.3 is the 0.999 quantile.
  CHECK(chi2 < 45.3);
}

TEST_CASE("restricting to a pool samples only from it") {
  const auto ds = testing::toy_dataset(std::vector<std::size_t>(10, 2), 2, 2, 1);
  BatchSampler sampler(UnlabeledView(ds), {2, 1}, {1, 3, 5, 7});
  CHECK(sampler.batches_per_epoch() == 2);
  for (int i = 0; i < 50; ++i) {
    for (auto f : sampler.next_frames()) CHECK(f % 2 == 1);
  }
}
