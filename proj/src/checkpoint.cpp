#include "herdid/checkpoint.hpp"

#include <array>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "herdid/error.hpp"

namespace herdid {
namespace {

constexpr std::array<char, 8> kMagic = {'H', 'E', 'R', 'D', 'C', 'K', 'P', '\x01'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <class T>
  void put(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
    bytes_ += sizeof(T);
  }
  void floats(const float* data, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
    bytes_ += n * sizeof(float);
  }
  std::uint64_t bytes() const { return bytes_; }

 private:
  std::ostream& out_;
  std::uint64_t bytes_ = 0;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <class T>
  T get() {
    T value{};
    read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
  }
  void floats(float* data, std::size_t n) { read(reinterpret_cast<char*>(data), n * sizeof(float)); }

  // Bounds a header-declared element count before allocating for it.
  std::size_t count(std::uint64_t n, std::uint64_t limit, const char* what) {
    require(n <= limit, ErrorKind::kFormat, std::string("implausible ") + what + " count in checkpoint");
    return static_cast<std::size_t>(n);
  }

 private:
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    require(in_.gcount() == static_cast<std::streamsize>(n), ErrorKind::kLength,
            "truncated HERDCKP1 stream");
  }
  std::istream& in_;
};

constexpr std::uint64_t kMaxParams = std::uint64_t{1} << 32;

}  // namespace

OptimizerSnapshot OptimizerSnapshot::of(const SgdOptimizer& optimizer) {
  return {optimizer.step(),      optimizer.total_steps(), optimizer.base_lr(), optimizer.config(),
          optimizer.velocities(), optimizer.t_velocity(), optimizer.b_velocity()};
}

std::uint64_t write_checkpoint(const Checkpoint& ckp, std::ostream& out) {
  Writer w(out);
  out.write(kMagic.data(), kMagic.size());
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckp.head.input_dim()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckp.loss.variant));
  w.put<std::uint32_t>(0);
  w.put<double>(ckp.loss.tau);
  w.put<double>(ckp.loss.t);
  w.put<double>(ckp.loss.b);
  w.put<double>(ckp.loss.t_min);
  w.put<double>(ckp.loss.t_max);

  const auto& params = ckp.head.parameters();
  w.put<std::uint64_t>(static_cast<std::uint64_t>(params.size()));
  w.floats(params.data(), static_cast<std::size_t>(params.size()));
  for (std::size_t l = 0; l < 3; ++l) {
    const auto& mean = ckp.head.running_mean()[l];
    const auto& var = ckp.head.running_var()[l];
    w.put<std::uint32_t>(static_cast<std::uint32_t>(mean.size()));
    w.floats(mean.data(), static_cast<std::size_t>(mean.size()));
    w.floats(var.data(), static_cast<std::size_t>(var.size()));
  }

  const auto& opt = ckp.optimizer;
  w.put<std::uint64_t>(opt.step);
  w.put<std::uint64_t>(opt.total_steps);
  w.put<double>(opt.base_lr);
  w.put<double>(opt.sgd.momentum);
  w.put<double>(opt.sgd.weight_decay);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(opt.velocities.size()));
  for (const auto& v : opt.velocities) {
    w.put<std::uint64_t>(v.size());
    w.floats(v.data(), v.size());
  }
  w.put<double>(opt.t_velocity);
  w.put<double>(opt.b_velocity);

  if (ckp.classifier) {
    const auto& c = *ckp.classifier;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.weight.rows()));
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = c.weight;
    w.floats(rm.data(), static_cast<std::size_t>(rm.size()));
    w.floats(c.bias.data(), static_cast<std::size_t>(c.bias.size()));
  } else {
    w.put<std::uint32_t>(0);
  }
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing HERDCKP1 stream");
  return w.bytes() + kMagic.size();
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kMagic) {
    fail(ErrorKind::kFormat, "bad magic: not a HERDCKP1 file");
  }
  Reader r(in);
  const auto version = r.get<std::uint32_t>();
  require(version == kVersion, ErrorKind::kFormat,
          "unsupported checkpoint version " + std::to_string(version));
  const auto input_dim = r.get<std::uint32_t>();
  const auto variant = r.get<std::uint32_t>();
  r.get<std::uint32_t>();
  require(variant <= static_cast<std::uint32_t>(LossVariant::kBce), ErrorKind::kFormat,
          "unknown loss variant in checkpoint");
  require(input_dim >= 1, ErrorKind::kFormat, "checkpoint input dimension must be >= 1");

  Checkpoint ckp;
  ckp.loss.variant = static_cast<LossVariant>(variant);
  ckp.loss.tau = r.get<double>();
  ckp.loss.t = r.get<double>();
  ckp.loss.b = r.get<double>();
  ckp.loss.t_min = r.get<double>();
  ckp.loss.t_max = r.get<double>();

  ckp.head = ProjectionHead<float>::init(input_dim, 0);
  auto& params = ckp.head.parameters();
  const auto n_params = r.count(r.get<std::uint64_t>(), kMaxParams, "parameter");
  require(n_params == static_cast<std::size_t>(params.size()), ErrorKind::kFormat,
          "checkpoint parameter count does not match the head layout");
  r.floats(params.data(), n_params);
  for (std::size_t l = 0; l < 3; ++l) {
    const auto width = r.get<std::uint32_t>();
    require(width == kHiddenWidths[l], ErrorKind::kFormat, "unexpected batch-norm width");
    r.floats(ckp.head.running_mean()[l].data(), width);
    r.floats(ckp.head.running_var()[l].data(), width);
  }

  auto& opt = ckp.optimizer;
  opt.step = r.get<std::uint64_t>();
  opt.total_steps = r.get<std::uint64_t>();
  opt.base_lr = r.get<double>();
  opt.sgd.momentum = r.get<double>();
  opt.sgd.weight_decay = r.get<double>();
  const auto blocks = r.count(r.get<std::uint32_t>(), 16, "velocity block");
  for (std::size_t i = 0; i < blocks; ++i) {
    std::vector<float> v(r.count(r.get<std::uint64_t>(), kMaxParams, "velocity"));
    r.floats(v.data(), v.size());
    opt.velocities.push_back(std::move(v));
  }
  opt.t_velocity = r.get<double>();
  opt.b_velocity = r.get<double>();

  const auto classes = r.count(r.get<std::uint32_t>(), 1 << 20, "class");
  if (classes > 0) {
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(
        static_cast<Eigen::Index>(classes), kOutputWidth);
    r.floats(rm.data(), static_cast<std::size_t>(rm.size()));
    Classifier c;
    c.weight = rm;
    c.bias.resize(static_cast<Eigen::Index>(classes));
    r.floats(c.bias.data(), classes);
    ckp.classifier = std::move(c);
  }
  require(in.peek() == std::char_traits<char>::eof(), ErrorKind::kLength,
          "HERDCKP1 stream has bytes past the end");
  ckp.head.set_mode(Mode::kEval);
  return ckp;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  write_checkpoint(checkpoint, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace herdid
