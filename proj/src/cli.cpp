#include "herdid/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "CLI11.hpp"
#include "herdid/checkpoint.hpp"
#include "herdid/cluster.hpp"
#include "herdid/error.hpp"
#include "herdid/eval.hpp"
#include "herdid/rng.hpp"
#include "herdid/simulate.hpp"
#include "herdid/store.hpp"
#include "herdid/train.hpp"
#include "json.hpp"

namespace herdid {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCheckpointFile = "checkpoint.herdckp";
constexpr const char* kLogFile = "train.log.jsonl";
constexpr const char* kAssignmentsFile = "assignments.csv";
constexpr const char* kReportFile = "report.json";
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kDatasetFile = "dataset.herdemb";

struct TrainOptions {
  std::string loss = "bce";
  double tau = 0.5;
  std::size_t epochs = 10;
  std::size_t frames_per_batch = 2;
  bool supervised = false;
  std::size_t train_frames = 1000;
  std::size_t val_frames = 200;
  std::size_t patience = 10;
};

struct ClusterOptions {
  std::uint32_t ids = 0;  // 0: take N_ID from the dataset header
  std::size_t restarts = 10;
  bool per_view = false;
};

struct Common {
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::string output;
};

void add_common(CLI::App* app, Common& c, bool output_required, const std::string& output_help) {
  app->add_option("--seed", c.seed, "Master seed; per-stage seeds are derived from it");
  app->add_flag("--deterministic", c.deterministic, "Single-threaded, bit-reproducible run");
  auto* o = app->add_option("-o,--output", c.output, output_help);
  if (output_required) o->required();
}

void add_sim_options(CLI::App* app, SimConfig& s) {
  app->add_option("--ids", s.n_identities, "Number of individuals (>= 2)")
      ->check(CLI::Range(2u, 1u << 20));
  app->add_option("--frames", s.n_frames, "Number of frames (>= 2)")->check(CLI::Range(2u, 1u << 30));
  app->add_option("--dim", s.embedding_dim, "Embedding dimension")->check(CLI::Range(1u, 1u << 20));
  app->add_option("--views", s.views_per_detection, "Stored views per detection (>= 2)")
      ->check(CLI::Range(2u, 1024u));
  app->add_option("--identity-noise", s.identity_noise_sigma, "Per-frame appearance drift sigma")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--view-noise", s.view_noise_sigma, "Per-view augmentation noise sigma")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--visibility", s.visibility_prob, "Per-frame visibility probability in (0,1]")
      ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0));
}

void add_train_options(CLI::App* app, TrainOptions& t) {
  app->add_option("--loss", t.loss, "bce | supcon | supcon-learnable")
      ->check(CLI::IsMember({"bce", "supcon", "supcon-learnable"}));
  app->add_option("--tau", t.tau, "Fixed SupCon temperature")->check(CLI::PositiveNumber);
  app->add_option("--epochs", t.epochs, "Training epochs (>= 1)")->check(CLI::PositiveNumber);
  app->add_option("-k,--frames-per-batch", t.frames_per_batch, "Frames per batch K (>= 2)")
      ->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20));
  app->add_flag("--supervised", t.supervised, "Cross-entropy baseline using ground-truth labels");
  app->add_option("--train-frames", t.train_frames, "Supervised training frames");
  app->add_option("--val-frames", t.val_frames, "Supervised validation frames");
  app->add_option("--patience", t.patience, "Early-stopping patience in epochs")
      ->check(CLI::PositiveNumber);
}

void add_cluster_options(CLI::App* app, ClusterOptions& c) {
  app->add_option("--ids", c.ids, "Override N_ID (number of clusters)")->check(CLI::Range(1u, 1u << 20));
  app->add_option("--restarts", c.restarts, "k-means restarts")->check(CLI::PositiveNumber);
  app->add_flag("--per-view", c.per_view, "Cluster every view, then majority-vote per detection");
}

json sim_json(const SimConfig& s) {
  return {{"ids", s.n_identities},           {"frames", s.n_frames},
          {"dim", s.embedding_dim},          {"views", s.views_per_detection},
          {"identity_noise", s.identity_noise_sigma}, {"view_noise", s.view_noise_sigma},
          {"visibility", s.visibility_prob}, {"seed", s.seed}};
}

json train_json(const TrainOptions& t) {
  return {{"loss", t.loss},
          {"tau", t.tau},
          {"epochs", t.epochs},
          {"frames_per_batch", t.frames_per_batch},
          {"supervised", t.supervised},
          {"train_frames", t.train_frames},
          {"val_frames", t.val_frames},
          {"patience", t.patience}};
}

json cluster_json(const ClusterOptions& c) {
  return {{"ids", c.ids}, {"restarts", c.restarts}, {"per_view", c.per_view}};
}

std::size_t worker_threads(bool deterministic) {
  if (deterministic) return 1;
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HERDID_THREADS")) {
    try {
      n = std::max<std::size_t>(1, std::stoul(env));
    } catch (const std::exception&) {
      fail(ErrorKind::kUsage, "HERDID_THREADS must be a positive integer");
    }
  }
  return n;
}

LossParams loss_params(const TrainOptions& t) {
  if (t.loss == "supcon") return LossParams::supcon_fixed(t.tau);
  if (t.loss == "supcon-learnable") return LossParams::supcon_learnable();
  return LossParams::bce();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::kIo, "cannot create directory " + dir + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out << text;
}

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& argv)
      : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["argv"] = argv;
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::object();
  }
  json& operator[](const char* key) { return doc_[key]; }
  void input(const std::string& role, const fs::path& p) { doc_["inputs"][role] = p.string(); }
  void output(const std::string& role, const fs::path& p) { outputs_.emplace_back(role, p); }

  /// Standalone record (the simulate sidecar).
  void write(const fs::path& path) { write_text(path, finish().dump(2) + "\n"); }

  /// Run-directory manifest: one record per command, keyed by command name,
  /// so train/cluster/evaluate sharing a directory keep each other's record.
  void merge_into(const fs::path& path) {
    json all = json::object();
    if (fs::exists(path)) {
      std::ifstream in(path);
      all = json::parse(in, nullptr, false);
      if (all.is_discarded() || !all.is_object() || all.contains("argv")) all = json::object();
    }
    all[doc_["command"].get<std::string>()] = finish();
    write_text(path, all.dump(2) + "\n");
  }

 private:
  json finish() {
    for (const auto& [role, p] : outputs_) {
      doc_["outputs"][role] = {{"path", p.string()}, {"fnv1a64", file_checksum(p.string())}};
    }
    doc_["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return doc_;
  }

 public:

 private:
  json doc_;
  std::vector<std::pair<std::string, fs::path>> outputs_;
  std::chrono::steady_clock::time_point start_;
};

EmbeddingDataset simulate_stage(SimConfig config, std::uint64_t master_seed) {
  config.seed = derive_seed(master_seed, stage::kSimulate);
  return generate(config);
}

struct TrainOutcome {
  Checkpoint checkpoint;
  std::optional<SupervisedResult> supervised;
};

TrainOutcome train_stage(const EmbeddingDataset& dataset, const TrainOptions& opts,
                         std::uint64_t master_seed, const fs::path& dir) {
  TrainConfig cfg;
  cfg.epochs = opts.epochs;
  cfg.frames_per_batch = opts.frames_per_batch;
  cfg.loss = loss_params(opts);
  cfg.seed = derive_seed(master_seed, stage::kTrain);
  cfg.train_frames = opts.train_frames;
  cfg.val_frames = opts.val_frames;
  cfg.patience = opts.patience;

  TrainOutcome outcome;
  outcome.checkpoint.head =
      ProjectionHead<float>::init(dataset.embedding_dim(), derive_seed(master_seed, stage::kHeadInit));
  std::vector<LogRecord> log;
  if (opts.supervised) {
    require(dataset.has_all_labels() && dataset.n_identities().has_value(), ErrorKind::kConfig,
            "--supervised needs a labeled dataset with known N_ID");
    auto result = train_supervised(dataset, outcome.checkpoint.head, cfg);
    outcome.checkpoint.loss = cfg.loss;
    outcome.checkpoint.classifier = result.classifier;
    log = result.log;
    outcome.supervised = std::move(result);
  } else {
    auto result = train_selfsup(UnlabeledView(dataset), outcome.checkpoint.head, cfg);
    outcome.checkpoint.loss = result.loss;
    outcome.checkpoint.optimizer = OptimizerSnapshot::of(result.optimizer);
    log = std::move(result.log);
  }
  save_checkpoint(outcome.checkpoint, dir / kCheckpointFile);
  std::ofstream log_out(dir / kLogFile, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(log_out), ErrorKind::kIo, "cannot write training log");
  write_log_jsonl(log_out, log);
  return outcome;
}

struct Labeled {
  std::uint64_t frame_id;
  std::uint32_t detection_idx;
  std::size_t cluster;
};

void write_assignments(const fs::path& path, const std::vector<Labeled>& rows) {
  std::ostringstream out;
  out << "frame_id,detection_idx,cluster\n";
  for (const auto& r : rows) out << r.frame_id << "," << r.detection_idx << "," << r.cluster << "\n";
  write_text(path, out.str());
}

std::vector<Labeled> read_assignments(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  std::vector<Labeled> rows;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || (number == 1 && line.starts_with("frame_id"))) continue;
    std::istringstream fields(line);
    Labeled r{};
    char c1 = 0, c2 = 0;
    if (!(fields >> r.frame_id >> c1 >> r.detection_idx >> c2 >> r.cluster) || c1 != ',' || c2 != ',') {
      fail(ErrorKind::kFormat, "malformed assignments line " + std::to_string(number));
    }
    rows.push_back(r);
  }
  return rows;
}

std::uint32_t resolve_ids(const EmbeddingDataset& dataset, std::uint32_t override_ids) {
  if (override_ids > 0) return override_ids;
  require(dataset.n_identities().has_value(), ErrorKind::kConfig,
          "dataset header has unknown N_ID; pass --ids");
  return *dataset.n_identities();
}

std::vector<Labeled> cluster_stage(const EmbeddingDataset& dataset, const Checkpoint& ckp,
                                   const ClusterOptions& opts, std::uint64_t master_seed,
                                   std::size_t threads) {
  const std::uint32_t k = resolve_ids(dataset, opts.ids);
  KMeansOptions km{k, derive_seed(master_seed, stage::kCluster), opts.restarts, 300, threads};
  std::vector<std::size_t> labels;
  if (opts.per_view) {
    const auto result = kmeans(embed_views(dataset, ckp.head), km);
    labels = majority_vote(result.assignments, dataset.views_per_detection(), k);
  } else {
    labels = kmeans(embed_all(dataset, ckp.head), km).assignments;
  }
  std::vector<Labeled> rows;
  rows.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    rows.push_back({dataset.records()[i].frame_id, dataset.records()[i].detection_idx, labels[i]});
  }
  return rows;
}

EvalReport evaluate_stage(const EmbeddingDataset& dataset, const std::vector<Labeled>& rows,
                          std::uint32_t n_ids) {
  std::map<std::pair<std::uint64_t, std::uint32_t>, std::int32_t> label_of;
  for (const auto& r : dataset.records()) label_of[{r.frame_id, r.detection_idx}] = r.gt_label;
  std::vector<std::size_t> predicted;
  std::vector<std::int32_t> truth;
  for (const auto& row : rows) {
    const auto it = label_of.find({row.frame_id, row.detection_idx});
    require(it != label_of.end(), ErrorKind::kCoverage,
            "assignment for unknown detection (frame " + std::to_string(row.frame_id) + ", detection " +
                std::to_string(row.detection_idx) + ")");
    predicted.push_back(row.cluster);
    truth.push_back(it->second);
  }
  return evaluate(predicted, truth, n_ids);
}

void emit_report(const EvalReport& report, const fs::path& dir, std::ostream& out) {
  write_text(dir / kReportFile, to_json(report).dump(2) + "\n");
  out << format_table(report);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace

std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buffer[1 << 15];
  while (in.read(buffer, sizeof buffer) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(buffer[i]);
      hash *= 0x100000001b3ULL;
    }
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << hash;
  return hex.str();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const Error& e) {
    err << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return 1;
  }
}

namespace {

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised individual identification from detection embeddings", "herdid"};
  app.require_subcommand(1);

  SimConfig sim;
  TrainOptions train;
  ClusterOptions clus;
  Common common;
  std::string input, checkpoint_path, assignments_path, manifest_path, replay_command;

  auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic HERDEMB1 dataset");
  add_common(c_sim, common, true, "Output dataset file");
  add_sim_options(c_sim, sim);

  auto* c_train = app.add_subcommand("train", "Train the projection head");
  add_common(c_train, common, true, "Run directory");
  c_train->add_option("-i,--input", input, "HERDEMB1 dataset")->required();
  add_train_options(c_train, train);

  auto* c_cluster = app.add_subcommand("cluster", "Embed all detections and cluster them");
  add_common(c_cluster, common, true, "Run directory");
  c_cluster->add_option("-i,--input", input, "HERDEMB1 dataset")->required();
  c_cluster->add_option("--checkpoint", checkpoint_path, "Checkpoint (default <run>/checkpoint.herdckp)");
  add_cluster_options(c_cluster, clus);

  auto* c_eval = app.add_subcommand("evaluate", "Score assignments against ground truth");
  add_common(c_eval, common, true, "Run directory");
  c_eval->add_option("-i,--input", input, "Labeled HERDEMB1 dataset")->required();
  c_eval->add_option("--assignments", assignments_path, "Assignments CSV (default <run>/assignments.csv)");
  c_eval->add_option("--ids", clus.ids, "Override N_ID")->check(CLI::Range(1u, 1u << 20));

  auto* c_pipe = app.add_subcommand("pipeline", "simulate-or-load, train, cluster, evaluate");
  add_common(c_pipe, common, true, "Run directory");
  c_pipe->add_option("-i,--input", input, "Use this dataset instead of simulating");
  add_sim_options(c_pipe, sim);
  add_train_options(c_pipe, train);
  c_pipe->add_option("--restarts", clus.restarts, "k-means restarts")->check(CLI::PositiveNumber);
  c_pipe->add_flag("--per-view", clus.per_view, "Cluster every view, then majority-vote");

  auto* c_replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  c_replay->add_option("manifest", manifest_path, "manifest.json")->required();
  c_replay->add_option("--command", replay_command,
                       "Which recorded command to re-run when the manifest holds several");

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string message = e.what();
    std::replace(message.begin(), message.end(), '\n', ' ');
    err << "error: usage: " << message << "\n";
    return 2;
  }

  const std::size_t threads = worker_threads(common.deterministic);

  if (c_replay->parsed()) {
    std::ifstream in(manifest_path);
    require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + manifest_path);
    const json doc = json::parse(in, nullptr, false);
    require(!doc.is_discarded() && doc.is_object(), ErrorKind::kFormat, "manifest is not a JSON object");
    const json* record = &doc;
    if (!doc.contains("argv")) {
      if (!replay_command.empty()) {
        require(doc.contains(replay_command), ErrorKind::kUsage,
                "manifest has no record for command " + replay_command);
        record = &doc[replay_command];
      } else {
        require(doc.size() == 1, ErrorKind::kUsage,
                "manifest records several commands; pass --command");
        record = &doc.begin().value();
      }
    }
    require(record->contains("argv"), ErrorKind::kFormat, "manifest record has no argv");
    return dispatch((*record)["argv"].get<std::vector<std::string>>(), out, err);
  }

  if (c_sim->parsed()) {
    Manifest manifest("simulate", args);
    const auto dataset = simulate_stage(sim, common.seed);
    const fs::path path = common.output;
    if (path.has_parent_path()) ensure_dir(path.parent_path().string());
    save_dataset(dataset, path);
    manifest["seed"] = common.seed;
    manifest["config"] = sim_json(sim);
    manifest.output("dataset", path);
    manifest.write(path.string() + ".manifest.json");
    out << "wrote " << dataset.size() << " detections to " << path.string() << "\n";
    return 0;
  }

  ensure_dir(common.output);
  const fs::path dir = common.output;
  Manifest manifest(app.get_subcommands().front()->get_name(), args);
  manifest["seed"] = common.seed;
  manifest["threads"] = threads;
  manifest["deterministic"] = common.deterministic;

  if (c_train->parsed()) {
    const auto dataset = load_dataset(input);
    manifest.input("dataset", input);
    manifest["config"] = train_json(train);
    train_stage(dataset, train, common.seed, dir);
    manifest.output("checkpoint", dir / kCheckpointFile);
    manifest.output("log", dir / kLogFile);
    manifest.merge_into(dir / kManifestFile);
    out << "trained " << train.epochs << " epochs; checkpoint in " << (dir / kCheckpointFile).string()
        << "\n";
    return 0;
  }

  if (c_cluster->parsed()) {
    const auto dataset = load_dataset(input);
    const fs::path ckp_path = checkpoint_path.empty() ? dir / kCheckpointFile : fs::path(checkpoint_path);
    const auto ckp = load_checkpoint(ckp_path);
    manifest.input("dataset", input);
    manifest.input("checkpoint", ckp_path);
    manifest["config"] = cluster_json(clus);
    write_assignments(dir / kAssignmentsFile, cluster_stage(dataset, ckp, clus, common.seed, threads));
    manifest.output("assignments", dir / kAssignmentsFile);
    manifest.merge_into(dir / kManifestFile);
    out << "clustered " << dataset.size() << " detections into " << resolve_ids(dataset, clus.ids)
        << " groups\n";
    return 0;
  }

  if (c_eval->parsed()) {
    const auto dataset = load_dataset(input);
    const fs::path a_path = assignments_path.empty() ? dir / kAssignmentsFile : fs::path(assignments_path);
    manifest.input("dataset", input);
    manifest.input("assignments", a_path);
    const auto report = evaluate_stage(dataset, read_assignments(a_path), resolve_ids(dataset, clus.ids));
    emit_report(report, dir, out);
    manifest.output("report", dir / kReportFile);
    manifest.merge_into(dir / kManifestFile);
    return 0;
  }

  // pipeline
  EmbeddingDataset dataset;
  if (input.empty()) {
    dataset = simulate_stage(sim, common.seed);
    save_dataset(dataset, dir / kDatasetFile);
    manifest.output("dataset", dir / kDatasetFile);
    manifest["simulate"] = sim_json(sim);
  } else {
    dataset = load_dataset(input);
    manifest.input("dataset", input);
  }
  manifest["train"] = train_json(train);
  manifest["cluster"] = cluster_json(clus);
  const auto trained = train_stage(dataset, train, common.seed, dir);
  manifest.output("checkpoint", dir / kCheckpointFile);
  manifest.output("log", dir / kLogFile);

  std::vector<Labeled> rows;
  if (trained.supervised) {
    const auto records = records_of(dataset, trained.supervised->split.test);
    const auto predicted = predict(dataset, trained.checkpoint.head, *trained.checkpoint.classifier, records);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = dataset.records()[records[i]];
      rows.push_back({r.frame_id, r.detection_idx, predicted[i]});
    }
  } else {
    rows = cluster_stage(dataset, trained.checkpoint, clus, common.seed, threads);
  }
  write_assignments(dir / kAssignmentsFile, rows);
  manifest.output("assignments", dir / kAssignmentsFile);
  const auto report = evaluate_stage(dataset, rows, resolve_ids(dataset, 0));
  emit_report(report, dir, out);
  manifest.output("report", dir / kReportFile);
  manifest.merge_into(dir / kManifestFile);
  return 0;
}

}  // namespace
}  // namespace herdid
