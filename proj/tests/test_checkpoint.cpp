#include <sstream>

#include "doctest.h"
#include "herdid/checkpoint.hpp"
#include "herdid/error.hpp"
#include "herdid/simulate.hpp"
#include "herdid/train.hpp"

using namespace herdid;

namespace {

Checkpoint trained(bool with_classifier) {
  SimConfig sim;
  sim.n_identities = 3;
  sim.n_frames = 12;
  sim.embedding_dim = 6;
  const auto ds = generate(sim);
  auto head = ProjectionHead<float>::init(6, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.loss = LossParams::supcon_learnable();
  auto result = train_selfsup(UnlabeledView(ds), head, cfg);
  Checkpoint ckp{head, result.loss, OptimizerSnapshot::of(result.optimizer), std::nullopt};
  if (with_classifier) ckp.classifier = Classifier::init(3, 2);
  return ckp;
}

std::string bytes_of(const Checkpoint& c) {
  std::ostringstream out;
  write_checkpoint(c, out);
  return out.str();
}

ErrorKind read_error(const std::string& bytes) {
  std::istringstream in(bytes);
  try {
    read_checkpoint(in);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kUsage;
}

}  // namespace

TEST_CASE("round trip preserves every field") {
  for (bool clf : {false, true}) {
    const auto c = trained(clf);
    const auto bytes = bytes_of(c);
    CHECK(bytes.substr(0, 8) == std::string("HERDCKP\x01", 8));
    std::istringstream in(bytes);
    const auto back = read_checkpoint(in);
    CHECK(back.head.parameters() == c.head.parameters());
    for (std::size_t l = 0; l < 3; ++l) {
      CHECK(back.head.running_mean()[l] == c.head.running_mean()[l]);
      CHECK(back.head.running_var()[l] == c.head.running_var()[l]);
    }
    CHECK(back.loss.variant == c.loss.variant);
    CHECK(back.loss.t == c.loss.t);
    CHECK(back.optimizer == c.optimizer);
    CHECK(back.classifier.has_value() == clf);
    if (clf) {
      CHECK(back.classifier->weight == c.classifier->weight);
      CHECK(back.classifier->bias == c.classifier->bias);
    }
    CHECK(bytes_of(back) == bytes);
  }
}

TEST_CASE("corrupt files are rejected") {
  const auto bytes = bytes_of(trained(false));
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK(read_error(bad) == ErrorKind::kFormat);
  CHECK(read_error(bytes.substr(0, bytes.size() - 3)) == ErrorKind::kLength);
  CHECK(read_error(bytes.substr(0, 20)) != ErrorKind::kUsage);
  CHECK(read_error(bytes + "x") == ErrorKind::kLength);
}
