#include "herdid/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "herdid/error.hpp"
#include "herdid/rng.hpp"
#include "json.hpp"

namespace herdid {
namespace {

constexpr std::uint64_t kSamplerStream = 1;
constexpr std::uint64_t kClassifierStream = 2;
constexpr std::uint64_t kSplitStream = 3;

double nominal_batch(std::size_t frames_per_batch, std::size_t max_detections) {
  return static_cast<double>(frames_per_batch * max_detections * 2);
}

// Mean cross-entropy of `logits` against `labels`, with d/dlogits.
double softmax_cross_entropy(const Eigen::MatrixXd& logits, const std::vector<std::size_t>& labels,
                             Eigen::MatrixXd* d_logits) {
  const Eigen::Index n = logits.rows();
  double loss = 0.0;
  if (d_logits) d_logits->resize(n, logits.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const double peak = logits.row(r).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(r).array() - peak).exp();
    const double denom = e.sum();
    const auto label = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(r)]);
    loss += peak + std::log(denom) - logits(r, label);
    if (d_logits) {
      d_logits->row(r) = e / denom;
      (*d_logits)(r, label) -= 1.0;
    }
  }
  if (d_logits) *d_logits /= static_cast<double>(n);
  return loss / static_cast<double>(n);
}

Eigen::MatrixXf gather_views(const EmbeddingDataset& dataset, const std::vector<std::size_t>& records) {
  const auto v = static_cast<Eigen::Index>(dataset.views_per_detection());
  const auto dim = static_cast<Eigen::Index>(dataset.embedding_dim());
  Eigen::MatrixXf out(static_cast<Eigen::Index>(records.size()) * v, dim);
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (Eigen::Index k = 0; k < v; ++k) {
      const auto src = dataset.view(records[i], static_cast<std::size_t>(k));
      out.row(static_cast<Eigen::Index>(i) * v + k) = Eigen::Map<const Eigen::RowVectorXf>(src.data(), dim);
    }
  }
  return out;
}

constexpr std::size_t kEvalChunkRecords = 2048;

}  // namespace

void validate(const TrainConfig& config) {
  require(config.epochs >= 1, ErrorKind::kConfig, "epochs must be >= 1");
  require(config.frames_per_batch >= 2, ErrorKind::kConfig, "frames per batch K must be >= 2");
  config.loss.validate();
}

void write_log_jsonl(std::ostream& out, const std::vector<LogRecord>& log) {
  for (const auto& r : log) {
    const nlohmann::json line{{"step", r.step}, {"epoch", r.epoch}, {"loss", r.loss},
                              {"lr", r.lr},     {"t", r.t},         {"b", r.b}};
    out << line.dump() << "\n";
  }
}

TrainResult train_selfsup(const UnlabeledView& data, ProjectionHead<float>& head,
                          const TrainConfig& config) {
  validate(config);
  require(head.input_dim() == data.embedding_dim(), ErrorKind::kDimension,
          "head input dimension does not match the dataset");

  BatchSampler sampler(data, {config.frames_per_batch, derive_seed(config.seed, kSamplerStream)});
  const std::size_t per_epoch = sampler.batches_per_epoch();
  const std::size_t total = config.epochs * per_epoch;
  const double base_lr =
      scaled_base_lr(nominal_batch(config.frames_per_batch, data.max_detections_per_frame()));

  TrainResult result{{}, config.loss,
                     SgdOptimizer(config.sgd, base_lr, total,
                                  {static_cast<std::size_t>(head.parameters().size())})};
  result.log.reserve(total);
  head.set_mode(Mode::kTrain);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t step = result.optimizer.step();
      const TrainingBatch batch = sampler.next();
      const Eigen::MatrixXd projected = head.forward(batch.features).cast<double>();
      const SimilarityMatrix sim = similarity(projected);
      const MaskMatrix mask = build_mask(sim, batch);
      const LossResult loss = loss_and_grads(sim, mask, result.loss);
      const Eigen::MatrixXf d_out = similarity_backward(sim, loss.d_sim).cast<float>();
      const GradientSet<float> grads = head.backward(d_out);

      LogRecord record{step, epoch, loss.loss, result.optimizer.current_lr(), result.loss.t,
                       result.loss.b};
      result.optimizer.update(0, {head.parameters().data(), static_cast<std::size_t>(head.parameters().size())},
                              {grads.values.data(), static_cast<std::size_t>(grads.values.size())});
      result.optimizer.update_scalars(result.loss, loss.d_t, loss.d_b);
      result.optimizer.finish_step();
      result.log.push_back(record);

      if (config.eval_every > 0 && config.on_progress && (step + 1) % config.eval_every == 0) {
        config.on_progress(step + 1, head);
      }
    }
  }
  head.clear_cache();
  head.set_mode(Mode::kEval);
  return result;
}

Classifier Classifier::init(std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  Classifier c;
  const double bound = 1.0 / std::sqrt(static_cast<double>(kOutputWidth));
  c.weight.resize(static_cast<Eigen::Index>(classes), kOutputWidth);
  for (Eigen::Index r = 0; r < c.weight.rows(); ++r) {
    for (Eigen::Index k = 0; k < c.weight.cols(); ++k) {
      c.weight(r, k) = static_cast<float>(rng.uniform(-bound, bound));
    }
  }
  c.bias = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(classes));
  return c;
}

Eigen::MatrixXf Classifier::logits(const Eigen::MatrixXf& features) const {
  Eigen::MatrixXf out = features * weight.transpose();
  out.rowwise() += bias.transpose();
  return out;
}

FrameSplit split_frames(const EmbeddingDataset& dataset, std::size_t train_frames,
                        std::size_t val_frames, std::uint64_t seed) {
  std::vector<std::size_t> frames;
  const auto& index = dataset.frame_index();
  for (std::size_t f = 0; f < index.size(); ++f) {
    if (index[f].size() > 0) frames.push_back(f);
  }
  require(train_frames + val_frames <= frames.size(), ErrorKind::kInsufficientData,
          "split needs " + std::to_string(train_frames + val_frames) + " frames, dataset has " +
              std::to_string(frames.size()));
  Rng rng(seed);
  rng.shuffle(frames.begin(), frames.end());
  FrameSplit split;
  const auto t_end = frames.begin() + static_cast<std::ptrdiff_t>(train_frames);
  const auto v_end = t_end + static_cast<std::ptrdiff_t>(val_frames);
  split.train.assign(frames.begin(), t_end);
  split.val.assign(t_end, v_end);
  split.test.assign(v_end, frames.end());
  for (auto* part : {&split.train, &split.val, &split.test}) std::sort(part->begin(), part->end());
  return split;
}

std::vector<std::size_t> records_of(const EmbeddingDataset& dataset,
                                    const std::vector<std::size_t>& frames) {
  std::vector<std::size_t> out;
  for (std::size_t f : frames) {
    const auto& range = dataset.frame_index().at(f);
    for (std::size_t r = range.begin; r < range.end; ++r) out.push_back(r);
  }
  return out;
}

double cross_entropy(const EmbeddingDataset& dataset, const ProjectionHead<float>& head,
                     const Classifier& classifier, const std::vector<std::size_t>& records) {
  if (records.empty()) return 0.0;
  const std::size_t v = dataset.views_per_detection();
  double sum = 0.0;
  for (std::size_t start = 0; start < records.size(); start += kEvalChunkRecords) {
    const std::vector<std::size_t> chunk(
        records.begin() + static_cast<std::ptrdiff_t>(start),
        records.begin() + static_cast<std::ptrdiff_t>(std::min(records.size(), start + kEvalChunkRecords)));
    const Eigen::MatrixXd logits =
        classifier.logits(head.infer(gather_views(dataset, chunk))).cast<double>();
    std::vector<std::size_t> labels;
    for (std::size_t r : chunk) {
      labels.insert(labels.end(), v, static_cast<std::size_t>(dataset.records()[r].gt_label));
    }
    sum += softmax_cross_entropy(logits, labels, nullptr) * static_cast<double>(labels.size());
  }
  return sum / static_cast<double>(records.size() * v);
}

std::vector<std::size_t> predict(const EmbeddingDataset& dataset, const ProjectionHead<float>& head,
                                 const Classifier& classifier,
                                 const std::vector<std::size_t>& records) {
  const auto v = static_cast<Eigen::Index>(dataset.views_per_detection());
  std::vector<std::size_t> out;
  out.reserve(records.size());
  for (std::size_t start = 0; start < records.size(); start += kEvalChunkRecords) {
    const std::vector<std::size_t> chunk(
        records.begin() + static_cast<std::ptrdiff_t>(start),
        records.begin() + static_cast<std::ptrdiff_t>(std::min(records.size(), start + kEvalChunkRecords)));
    const Eigen::MatrixXd logits =
        classifier.logits(head.infer(gather_views(dataset, chunk))).cast<double>();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const Eigen::RowVectorXd mean = logits.middleRows(static_cast<Eigen::Index>(i) * v, v).colwise().mean();
      Eigen::Index arg = 0;
      mean.maxCoeff(&arg);
      out.push_back(static_cast<std::size_t>(arg));
    }
  }
  return out;
}

SupervisedResult train_supervised(const EmbeddingDataset& dataset, ProjectionHead<float>& head,
                                  const TrainConfig& config) {
  validate(config);
  require(dataset.has_all_labels() && dataset.n_identities().has_value(), ErrorKind::kConfig,
          "supervised training requires ground-truth labels and a known N_ID");
  require(config.patience >= 1, ErrorKind::kConfig, "patience must be >= 1");
  require(head.input_dim() == dataset.embedding_dim(), ErrorKind::kDimension,
          "head input dimension does not match the dataset");
  const std::size_t classes = *dataset.n_identities();

  SupervisedResult result;
  result.split = split_frames(dataset, config.train_frames, config.val_frames,
                              derive_seed(config.seed, kSplitStream));
  result.classifier = Classifier::init(classes, derive_seed(config.seed, kClassifierStream));
  const std::vector<std::size_t> val_records = records_of(dataset, result.split.val);

  const UnlabeledView view(dataset);
  BatchSampler sampler(view, {config.frames_per_batch, derive_seed(config.seed, kSamplerStream)},
                       result.split.train);
  std::size_t max_det = 0;
  for (std::size_t f : result.split.train) max_det = std::max(max_det, dataset.frame_index()[f].size());
  const std::size_t per_epoch = sampler.batches_per_epoch();
  Classifier& clf = result.classifier;
  SgdOptimizer optimizer(config.sgd, scaled_base_lr(nominal_batch(config.frames_per_batch, max_det)),
                         config.epochs * per_epoch,
                         {static_cast<std::size_t>(head.parameters().size()),
                          static_cast<std::size_t>(clf.weight.size()),
                          static_cast<std::size_t>(clf.bias.size())});

  ProjectionHead<float> best_head = head;
  Classifier best_clf = clf;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    head.set_mode(Mode::kTrain);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t step = optimizer.step();
      const TrainingBatch batch = sampler.next();
      std::vector<std::size_t> labels;
      for (const auto& row : batch.rows) {
        labels.push_back(static_cast<std::size_t>(dataset.records()[row.record].gt_label));
      }
      const Eigen::MatrixXf projected = head.forward(batch.features);
      Eigen::MatrixXd d_logits;
      const double loss =
          softmax_cross_entropy(clf.logits(projected).cast<double>(), labels, &d_logits);
      const Eigen::MatrixXf d_logits_f = d_logits.cast<float>();

      // Row-major so the flat buffer matches the optimizer's velocity layout.
      Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> d_weight =
          d_logits_f.transpose() * projected;
      Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> weight_rm = clf.weight;
      const Eigen::VectorXf d_bias = d_logits_f.colwise().sum().transpose();
      const Eigen::MatrixXf d_out = d_logits_f * clf.weight;
      const GradientSet<float> grads = head.backward(d_out);

      optimizer.update(0, {head.parameters().data(), static_cast<std::size_t>(head.parameters().size())},
                       {grads.values.data(), static_cast<std::size_t>(grads.values.size())});
      optimizer.update(1, {weight_rm.data(), static_cast<std::size_t>(weight_rm.size())},
                       {d_weight.data(), static_cast<std::size_t>(d_weight.size())});
      clf.weight = weight_rm;
      optimizer.update(2, {clf.bias.data(), static_cast<std::size_t>(clf.bias.size())},
                       {d_bias.data(), static_cast<std::size_t>(d_bias.size())});
      result.log.push_back({step, epoch, loss, optimizer.current_lr(), 0.0, 0.0});
      optimizer.finish_step();
      epoch_loss += loss;
    }
    head.clear_cache();
    head.set_mode(Mode::kEval);
    const double val_loss = cross_entropy(dataset, head, clf, val_records);
    result.history.push_back({epoch, epoch_loss / static_cast<double>(per_epoch), val_loss});
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      best_head = head;
      best_clf = clf;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  head = std::move(best_head);
  head.set_mode(Mode::kEval);
  clf = std::move(best_clf);
  return result;
}

}  // namespace herdid
