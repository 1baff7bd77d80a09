#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "experiment.hpp"
#include "pda/core.hpp"
#include "pda/io.hpp"
#include "pda/memory.hpp"
#include "pda/scoring.hpp"
#include "pda/simgen.hpp"
#include "pda/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pda::cli {
namespace {

int exit_code_for(const PdaError& e) {
  if (dynamic_cast<const ConfigInvalid*>(&e) != nullptr) return kExitConfig;
  if (dynamic_cast<const DegenerateVector*>(&e) != nullptr) return kExitNumeric;
  if (dynamic_cast<const NonPositiveTemperature*>(&e) != nullptr) return kExitNumeric;
  return kExitData;
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string join_args(const std::vector<std::string>& args) {
  std::string out = "pda";
  for (const auto& a : args) {
    out += ' ';
    out += a;
  }
  return out;
}

std::size_t worker_count() {
  if (const char* env = std::getenv("PDA_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Runs fn(0..n-1) on up to worker_count() threads; fn must confine itself to
// its own cell index.
void parallel_cells(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::vector<std::pair<std::uint64_t, fs::path>> seed_dirs(const fs::path& dir) {
  if (!fs::exists(dir)) throw IoError("episodes directory not found: " + dir.string());
  std::vector<std::pair<std::uint64_t, fs::path>> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("seed_", 0) != 0) continue;
    char* end = nullptr;
    const std::uint64_t seed = std::strtoull(name.c_str() + 5, &end, 10);
    if (end == nullptr || *end != '\0') continue;
    out.emplace_back(seed, entry.path());
  }
  if (out.empty()) throw IoError("no seed_<n> subdirectories in " + dir.string());
  std::sort(out.begin(), out.end());
  return out;
}

EpisodeConfig config_from_manifest(const fs::path& episodes) {
  const fs::path manifest_path = episodes / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw IoError("manifest.json not found in " + episodes.string());
  }
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw IoError("manifest.json: " + std::string(e.what()));
  }
  if (!manifest.contains("config")) throw IoError("manifest.json: missing config");
  return episode_config_from_json(manifest.at("config").dump());
}

void write_manifest(const fs::path& dir, const std::vector<std::string>& args,
                    const json& config, const std::string& config_hash,
                    const std::vector<std::uint64_t>& seeds,
                    const std::vector<fs::path>& files) {
  json manifest;
  manifest["tool"] = kToolVersion;
  manifest["command"] = join_args(args);
  manifest["config"] = config;
  manifest["config_hash"] = config_hash;
  manifest["seeds"] = seeds;
  json file_hashes = json::object();
  for (const auto& f : files) {
    file_hashes[fs::relative(f, dir).generic_string()] = file_hash_hex(f);
  }
  manifest["files"] = file_hashes;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------- gen ----

struct GenOpts {
  std::string config_path;
  std::string out_dir;
  std::size_t num_seeds = 1;
};

int cmd_gen(const GenOpts& opts, const std::vector<std::string>& args) {
  if (!fs::exists(opts.config_path)) {
    throw ConfigInvalid("config not found: " + opts.config_path);
  }
  if (opts.num_seeds == 0) throw ConfigInvalid("--num-seeds must be >= 1");
  const EpisodeConfig base = episode_config_from_json(read_file(opts.config_path));

  const fs::path out(opts.out_dir);
  fs::create_directories(out);
  std::vector<std::uint64_t> seeds;
  std::vector<fs::path> files;
  for (std::size_t i = 0; i < opts.num_seeds; ++i) {
    EpisodeConfig config = base;
    config.seed = base.seed + i;
    seeds.push_back(config.seed);
    const Episode episode = gen_episode(config);
    const fs::path dir = out / ("seed_" + std::to_string(config.seed));
    save_episode(episode, config, dir);
    for (const char* name : {"support.bin", "query.bin", "modes.bin"}) {
      files.push_back(dir / name);
    }
  }
  const std::string canonical = episode_config_to_json(base);
  write_manifest(out, args, json::parse(canonical), fnv1a_hex(canonical), seeds, files);
  std::cout << "wrote " << seeds.size() << " episode(s) to " << out.string() << "\n";
  return kExitOk;
}

// ----------------------------------------------------------- finetune ----

struct FinetuneOpts {
  std::string episodes;
  std::string out_dir;
  std::size_t k = 3;
  std::size_t steps = 100;
  double lr = 1e-3;
  double momentum = 0.9;
  bool ema = false;
  bool freeze_mem_flag = false;
  bool momentum_given = false;
  bool use_align = false;
  bool align_per_class = false;
  double tau = 0.05;
  double alpha = 0.1, beta = 0.9, gamma = 0.0;
  bool train_projection = true;
  bool train_scale = true;
  bool train_bias = true;
  bool train_aligner = true;
  bool loss_on_fused = true;
  std::uint64_t stream_seed = 0;
};

json finetune_config_json(const FinetuneOpts& opts, bool freeze_mem) {
  json j;
  j["k"] = opts.k;
  j["steps"] = opts.steps;
  j["lr"] = opts.lr;
  j["momentum"] = opts.momentum;
  j["freeze_mem"] = freeze_mem;
  j["use_align"] = opts.use_align;
  j["align_per_class"] = opts.align_per_class;
  j["tau"] = opts.tau;
  j["alpha"] = opts.alpha;
  j["beta"] = opts.beta;
  j["gamma"] = opts.gamma;
  j["train_projection"] = opts.train_projection;
  j["train_scale"] = opts.train_scale;
  j["train_bias"] = opts.train_bias;
  j["train_aligner"] = opts.train_aligner;
  j["loss_on_fused"] = opts.loss_on_fused;
  j["stream_seed"] = opts.stream_seed;
  return j;
}

int cmd_finetune(const FinetuneOpts& opts, const std::vector<std::string>& args) {
  if (opts.ema && opts.freeze_mem_flag) {
    throw ConfigInvalid("--ema and --freeze-mem are mutually exclusive");
  }
  const bool freeze_mem = !opts.ema;
  if (freeze_mem && opts.momentum_given) {
    std::cerr << "warning: --momentum has no effect with a frozen memory "
                 "(pass --ema to enable EMA updates)\n";
  }

  const fs::path episodes(opts.episodes);
  const EpisodeConfig base = config_from_manifest(episodes);
  const auto dirs = seed_dirs(episodes);
  const fs::path out(opts.out_dir);
  fs::create_directories(out);

  std::vector<std::uint64_t> seeds;
  std::vector<fs::path> files;
  for (const auto& [seed, dir] : dirs) {
    EpisodeConfig config = base;
    config.seed = seed;
    const Episode episode = load_episode(dir);

    PdaParams params = PdaParams::identity(config.dim);
    params.temperature = opts.tau;
    params.momentum = opts.momentum;
    params.fusion = {opts.alpha, opts.beta, opts.gamma};
    params.use_align = opts.use_align;
    params.align_per_class = opts.align_per_class;
    params.freeze_mem = freeze_mem;
    validate(params);

    PrototypeMemory memory = init_from_support(episode.support, opts.k, params);
    AlignerParams aligner = AlignerParams::zeros(config.map_channels, config.dim,
                                                 config.map_height, config.map_width);
    TrainConfig tcfg;
    tcfg.learning_rate = opts.lr;
    tcfg.steps = opts.steps;
    tcfg.ema_momentum = opts.momentum;
    tcfg.seed = opts.stream_seed;
    tcfg.train_projection = opts.train_projection;
    tcfg.train_scale = opts.train_scale;
    tcfg.train_bias = opts.train_bias;
    tcfg.train_aligner = opts.train_aligner;
    tcfg.loss_on_fused = opts.loss_on_fused;

    const std::uint64_t stream_seed = opts.stream_seed != 0 ? opts.stream_seed : seed;
    const auto stream = gen_train_stream(config, opts.steps, stream_seed);
    FinetuneResult result =
        finetune(stream, std::move(memory), std::move(params), std::move(aligner), tcfg);

    const fs::path seed_out = out / ("seed_" + std::to_string(seed));
    fs::create_directories(seed_out);
    save_memory(result.memory, seed_out / "memory.pdam");
    save_params(result.params, &result.aligner, seed_out / "params.pdap");
    write_file(seed_out / "history.csv", history_csv(result.history));
    seeds.push_back(seed);
    // history.csv carries wall-clock times, so it stays out of the hash list.
    files.push_back(seed_out / "memory.pdam");
    files.push_back(seed_out / "params.pdap");
  }

  const json config = finetune_config_json(opts, freeze_mem);
  write_manifest(out, args, config, fnv1a_hex(config.dump(2)), seeds, files);
  std::cout << "fine-tuned " << seeds.size() << " seed(s) into " << out.string() << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- eval ----

struct EvalOpts {
  std::string episodes;
  std::string run_dir;
  std::string memory_path;
  std::string params_path;
  std::size_t k = 3;
  double alpha = 0.1, beta = 0.9, gamma = 0.0;
  double tau = 0.05;
  bool tau_given = false;
  bool use_align = false;
  bool align_per_class = false;
  std::string out_path = "metrics.csv";
  std::string audit_path;
};

int cmd_eval(const EvalOpts& opts, const std::vector<std::string>& args) {
  const fs::path episodes(opts.episodes);
  const auto dirs = seed_dirs(episodes);
  if ((!opts.memory_path.empty() || !opts.params_path.empty()) && !opts.run_dir.empty()) {
    throw ConfigInvalid("--run and --memory/--params are mutually exclusive");
  }
  if (opts.memory_path.empty() != opts.params_path.empty()) {
    throw ConfigInvalid("--memory and --params must be given together");
  }
  if (!opts.memory_path.empty() && dirs.size() > 1) {
    throw ConfigInvalid("explicit --memory/--params need a single-seed episodes dir");
  }

  std::string csv = "seed,overall,base,novel,n_overall,n_base,n_novel\n";
  std::string audit = "seed,item,true,pred,p_pred,c_star,k_star,s_true,s_pred\n";
  std::vector<double> overalls, bases, novels;

  std::size_t num_base = 0;
  try {
    num_base = config_from_manifest(episodes).num_base;
  } catch (const IoError&) {
    // hand-assembled episode dir without manifest: treat every class as novel
  }

  for (const auto& [seed, dir] : dirs) {
    const Episode episode = load_episode(dir);
    const std::size_t dim = episode.support.entries.at(0).feature.size();
    const std::size_t classes = episode.support.num_classes;

    PdaParams params = PdaParams::identity(dim);
    std::optional<AlignerParams> aligner;
    std::optional<PrototypeMemory> memory;
    if (!opts.run_dir.empty() || !opts.memory_path.empty()) {
      const fs::path params_path = !opts.run_dir.empty()
                                       ? fs::path(opts.run_dir) / ("seed_" + std::to_string(seed)) /
                                             "params.pdap"
                                       : fs::path(opts.params_path);
      const fs::path memory_path = !opts.run_dir.empty()
                                       ? fs::path(opts.run_dir) / ("seed_" + std::to_string(seed)) /
                                             "memory.pdam"
                                       : fs::path(opts.memory_path);
      LoadedParams loaded = load_params(params_path);
      params = std::move(loaded.params);
      aligner = std::move(loaded.aligner);
      memory = load_memory(memory_path);
    } else {
      memory = freeze(init_from_support(episode.support, opts.k, params));
    }

    if (memory->dim() != dim || memory->num_classes() != classes) {
      throw DimensionMismatch(
          "eval: memory header (classes=" + std::to_string(memory->num_classes()) +
          ", slots=" + std::to_string(memory->slots_per_class()) +
          ", dim=" + std::to_string(memory->dim()) + ") does not match episode (classes=" +
          std::to_string(classes) + ", dim=" + std::to_string(dim) + ")");
    }
    if (params.dim() != memory->dim()) {
      throw DimensionMismatch("eval: params dim " + std::to_string(params.dim()) +
                              " does not match memory dim " + std::to_string(memory->dim()));
    }

    params.fusion = {opts.alpha, opts.beta, opts.gamma};
    const bool loaded_from_file = !opts.run_dir.empty() || !opts.memory_path.empty();
    if (!loaded_from_file || opts.tau_given) params.temperature = opts.tau;
    params.use_align = opts.use_align;
    params.align_per_class = opts.align_per_class;
    if (params.use_align && !aligner.has_value()) {
      throw ConfigInvalid("eval: --use-align needs a params file with an aligner block");
    }
    validate(params);

    const AlignerParams* aligner_ptr = aligner.has_value() ? &aligner.value() : nullptr;
    const MetricsReport report =
        evaluate(episode, num_base, [&](const QueryItem& item) {
          return score_roi(item.feature, item.fmap, *memory, params, aligner_ptr, item.z_cls,
                           nullptr)
              .probabilities;
        });
    csv += std::to_string(seed) + ',' + fmt(report.overall) + ',' + fmt(report.base) + ',' +
           fmt(report.novel) + ',' + std::to_string(report.n_overall) + ',' +
           std::to_string(report.n_base) + ',' + std::to_string(report.n_novel) + '\n';
    overalls.push_back(report.overall);
    bases.push_back(report.base);
    novels.push_back(report.novel);

    if (!opts.audit_path.empty()) {
      for (std::size_t i = 0; i < episode.query.size(); ++i) {
        const auto& item = episode.query[i];
        const ScoreResult r = score_roi(item.feature, item.fmap, *memory, params, aligner_ptr,
                                        item.z_cls, nullptr);
        const std::size_t pred = static_cast<std::size_t>(
            std::max_element(r.probabilities.begin(), r.probabilities.end()) -
            r.probabilities.begin());
        const double s_true = item.true_class < r.scores.values.size()
                                  ? r.scores.values[item.true_class]
                                  : 0.0;
        const double s_pred = pred < r.scores.values.size() ? r.scores.values[pred] : 0.0;
        audit += std::to_string(seed) + ',' + std::to_string(i) + ',' +
                 std::to_string(item.true_class) + ',' + std::to_string(pred) + ',' +
                 fmt(r.probabilities[pred]) + ',' +
                 std::to_string(r.diagnostics.global_best.class_id) + ',' +
                 std::to_string(r.diagnostics.global_best.slot) + ',' + fmt(s_true) + ',' +
                 fmt(s_pred) + '\n';
      }
    }
  }

  const AggregateStats o = aggregate(overalls), b = aggregate(bases), n = aggregate(novels);
  csv += "mean," + fmt(o.mean) + ',' + fmt(b.mean) + ',' + fmt(n.mean) + ",,,\n";
  csv += "std," + fmt(o.stddev) + ',' + fmt(b.stddev) + ',' + fmt(n.stddev) + ",,,\n";
  write_file(opts.out_path, csv);
  if (!opts.audit_path.empty()) write_file(opts.audit_path, audit);
  (void)args;
  std::cout << "overall " << fmt(o.mean) << " base " << fmt(b.mean) << " novel " << fmt(n.mean)
            << " (" << overalls.size() << " seed(s)) -> " << opts.out_path << "\n";
  return kExitOk;
}

// --------------------------------------------------------------- ablate ----

struct AblateOpts {
  std::string episodes;
  std::string sweep_path;
  std::string out_dir;
};

struct SweepSpec {
  std::vector<std::string> arms{"baseline", "pda_frozen", "pda_ema"};
  std::vector<std::size_t> shots;
  std::vector<std::size_t> k{3};
  std::vector<std::uint64_t> seeds;
  ArmSpec base;  // shared arm settings; kind/k overwritten per cell
};

SweepSpec parse_sweep(const std::string& text, const EpisodeConfig& config,
                      const std::vector<std::uint64_t>& default_seeds) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("sweep: ") + e.what());
  }
  if (!j.is_object()) throw ConfigInvalid("sweep: top level must be an object");
  static const char* kKeys[] = {"arms",     "shots",      "k",          "seeds",
                                "steps",    "lr",         "momentum",   "tau",
                                "use_align", "align_per_class",         "alpha",
                                "beta",     "gamma",      "train_projection",
                                "train_scale", "train_bias", "train_aligner",
                                "loss_on_fused"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(std::begin(kKeys), std::end(kKeys),
                     [&](const char* k) { return key == k; }) == std::end(kKeys)) {
      throw ConfigInvalid("sweep: unknown key '" + key + "'");
    }
  }

  SweepSpec spec;
  spec.shots = {config.shots};
  spec.seeds = default_seeds;
  try {
    if (j.contains("arms")) spec.arms = j.at("arms").get<std::vector<std::string>>();
    if (j.contains("shots")) spec.shots = j.at("shots").get<std::vector<std::size_t>>();
    if (j.contains("k")) spec.k = j.at("k").get<std::vector<std::size_t>>();
    if (j.contains("seeds")) spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("steps")) spec.base.steps = j.at("steps").get<std::size_t>();
    if (j.contains("lr")) spec.base.lr = j.at("lr").get<double>();
    if (j.contains("momentum")) spec.base.momentum = j.at("momentum").get<double>();
    if (j.contains("tau")) spec.base.tau = j.at("tau").get<double>();
    if (j.contains("use_align")) spec.base.use_align = j.at("use_align").get<bool>();
    if (j.contains("align_per_class")) {
      spec.base.align_per_class = j.at("align_per_class").get<bool>();
    }
    if (j.contains("alpha")) spec.base.eval_fusion.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) spec.base.eval_fusion.beta = j.at("beta").get<double>();
    if (j.contains("gamma")) spec.base.eval_fusion.gamma = j.at("gamma").get<double>();
    if (j.contains("train_projection")) {
      spec.base.train_projection = j.at("train_projection").get<bool>();
    }
    if (j.contains("train_scale")) spec.base.train_scale = j.at("train_scale").get<bool>();
    if (j.contains("train_bias")) spec.base.train_bias = j.at("train_bias").get<bool>();
    if (j.contains("train_aligner")) {
      spec.base.train_aligner = j.at("train_aligner").get<bool>();
    }
    if (j.contains("loss_on_fused")) {
      spec.base.loss_on_fused = j.at("loss_on_fused").get<bool>();
    }
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("sweep: ") + e.what());
  }
  spec.base.train_fusion = spec.base.eval_fusion;
  if (spec.arms.empty() || spec.shots.empty() || spec.k.empty() || spec.seeds.empty()) {
    throw ConfigInvalid("sweep: empty grid");
  }
  for (const auto& arm : spec.arms) arm_from_name(arm);  // reject unknown arms early
  return spec;
}

struct CellResult {
  std::string arm;
  std::size_t shots = 0;
  std::size_t k = 0;
  AggregateStats overall, base, novel;
  bool ok = false;
  std::string error;
  int error_code = 0;
};

int cmd_ablate(const AblateOpts& opts, const std::vector<std::string>& args) {
  const fs::path episodes(opts.episodes);
  const EpisodeConfig base_config = config_from_manifest(episodes);
  std::vector<std::uint64_t> default_seeds;
  for (const auto& [seed, dir] : seed_dirs(episodes)) default_seeds.push_back(seed);

  if (!fs::exists(opts.sweep_path)) {
    throw ConfigInvalid("sweep spec not found: " + opts.sweep_path);
  }
  const std::string sweep_text = read_file(opts.sweep_path);
  const SweepSpec sweep = parse_sweep(sweep_text, base_config, default_seeds);

  std::vector<CellResult> cells;
  for (const auto& arm : sweep.arms) {
    for (std::size_t shots : sweep.shots) {
      for (std::size_t k : sweep.k) {
        CellResult cell;
        cell.arm = arm;
        cell.shots = shots;
        cell.k = k;
        cells.push_back(std::move(cell));
      }
    }
  }

  parallel_cells(cells.size(), [&](std::size_t index) {
    CellResult& cell = cells[index];
    try {
      ArmSpec spec = sweep.base;
      spec.kind = arm_from_name(cell.arm);
      spec.k = cell.k;
      std::vector<double> overalls, bases, novels;
      for (std::uint64_t seed : sweep.seeds) {
        EpisodeConfig config = base_config;
        config.shots = cell.shots;
        config.seed = seed;
        validate(config);
        const Episode episode = gen_episode(config);
        const MetricsReport report = run_arm(config, episode, spec);
        overalls.push_back(report.overall);
        bases.push_back(report.base);
        novels.push_back(report.novel);
      }
      cell.overall = aggregate(overalls);
      cell.base = aggregate(bases);
      cell.novel = aggregate(novels);
      cell.ok = true;
    } catch (const PdaError& e) {
      cell.error = e.what();
      cell.error_code = exit_code_for(e);
    } catch (const std::exception& e) {
      cell.error = e.what();
      cell.error_code = 1;
    }
  });

  const fs::path out(opts.out_dir);
  fs::create_directories(out);

  std::string csv =
      "arm,shots,k,overall_mean,overall_std,base_mean,base_std,novel_mean,novel_std,status\n";
  std::string md = "| arm | shots | k | overall | base | novel |\n";
  md += "|---|---|---|---|---|---|\n";
  char buf[96];
  for (const auto& cell : cells) {
    if (cell.ok) {
      csv += cell.arm + ',' + std::to_string(cell.shots) + ',' + std::to_string(cell.k) + ',' +
             fmt(cell.overall.mean) + ',' + fmt(cell.overall.stddev) + ',' +
             fmt(cell.base.mean) + ',' + fmt(cell.base.stddev) + ',' + fmt(cell.novel.mean) +
             ',' + fmt(cell.novel.stddev) + ",ok\n";
      md += "| " + cell.arm + " | " + std::to_string(cell.shots) + " | " +
            std::to_string(cell.k) + " |";
      std::snprintf(buf, sizeof(buf), " %.4f ± %.4f |", cell.overall.mean,
                    cell.overall.stddev);
      md += buf;
      std::snprintf(buf, sizeof(buf), " %.4f ± %.4f |", cell.base.mean, cell.base.stddev);
      md += buf;
      std::snprintf(buf, sizeof(buf), " %.4f ± %.4f |\n", cell.novel.mean, cell.novel.stddev);
      md += buf;
    } else {
      csv += cell.arm + ',' + std::to_string(cell.shots) + ',' + std::to_string(cell.k) +
             ",,,,,,,ERROR: " + cell.error + '\n';
      md += "| " + cell.arm + " | " + std::to_string(cell.shots) + " | " +
            std::to_string(cell.k) + " | ERROR: " + cell.error + " | | |\n";
    }
  }
  write_file(out / "ablation.csv", csv);
  write_file(out / "ablation.md", md);

  json sweep_json = json::parse(sweep_text);
  write_manifest(out, args, sweep_json, fnv1a_hex(sweep_text),
                 std::vector<std::uint64_t>(sweep.seeds),
                 {out / "ablation.csv", out / "ablation.md"});

  for (const auto& cell : cells) {
    if (!cell.ok) {
      std::cerr << "cell (" << cell.arm << ", shots=" << cell.shots << ", k=" << cell.k
                << ") failed: " << cell.error << "\n";
    }
  }
  for (const auto& cell : cells) {
    if (!cell.ok) return cell.error_code;
  }
  std::cout << "ablation table with " << cells.size() << " cells -> " << out.string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------- inspect-memory ----

int cmd_inspect(const std::string& path) {
  const PrototypeMemory memory = load_memory(path);
  std::cout << "file: " << path << "\n"
            << "classes: " << memory.num_classes() << "  slots: " << memory.slots_per_class()
            << "  dim: " << memory.dim() << "  frozen: " << (memory.frozen() ? "yes" : "no")
            << "\n";
  for (std::size_t c = 0; c < memory.num_classes(); ++c) {
    double min_cos = 1.0, max_cos = -1.0;
    for (std::size_t a = 0; a < memory.slots_per_class(); ++a) {
      for (std::size_t b = a + 1; b < memory.slots_per_class(); ++b) {
        const double cos_ab = cosine(memory.slot(c, a), memory.slot(c, b));
        min_cos = std::min(min_cos, cos_ab);
        max_cos = std::max(max_cos, cos_ab);
      }
    }
    std::cout << "class " << c << ": ";
    if (memory.slots_per_class() > 1) {
      std::cout << "intra-slot cosine [" << fmt(min_cos) << ", " << fmt(max_cos) << "]\n";
    } else {
      std::cout << "single slot\n";
    }
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"prototype-driven metric head: episode generation, fine-tuning, "
               "evaluation, and ablation tables"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  GenOpts gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate synthetic episodes");
  gen_cmd->add_option("--config", gen.config_path, "episode config JSON")->required();
  gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
  gen_cmd->add_option("--num-seeds", gen.num_seeds,
                      "episodes to generate, seeded config.seed..config.seed+N-1");

  FinetuneOpts ft;
  auto* ft_cmd = app.add_subcommand("finetune", "fine-tune the head on stored episodes");
  ft_cmd->add_option("--episodes", ft.episodes, "episode directory from 'gen'")->required();
  ft_cmd->add_option("--out", ft.out_dir, "run output directory")->required();
  ft_cmd->add_option("--k", ft.k, "prototype slots per class");
  ft_cmd->add_option("--steps", ft.steps, "fine-tuning steps");
  ft_cmd->add_option("--lr", ft.lr, "SGD learning rate");
  auto* momentum_opt = ft_cmd->add_option("--momentum", ft.momentum, "EMA momentum in [0,1)");
  ft_cmd->add_flag("--ema", ft.ema, "enable EMA memory updates during fine-tuning");
  ft_cmd->add_flag("--freeze-mem", ft.freeze_mem_flag,
                   "keep the prototype memory frozen (default)");
  ft_cmd->add_flag("--use-align", ft.use_align, "enable prototype-conditioned alignment");
  ft_cmd->add_flag("--align-per-class", ft.align_per_class, "one warp per class");
  ft_cmd->add_option("--tau", ft.tau, "metric temperature");
  ft_cmd->add_option("--alpha", ft.alpha, "fusion weight for the metric branch");
  ft_cmd->add_option("--beta", ft.beta, "fusion weight for the detector logits");
  ft_cmd->add_option("--gamma", ft.gamma, "fusion weight for PCB logits");
  ft_cmd->add_flag("--train-projection,!--no-train-projection", ft.train_projection,
                   "train the projection matrix");
  ft_cmd->add_flag("--train-scale,!--no-train-scale", ft.train_scale, "train the log scale");
  ft_cmd->add_flag("--train-bias,!--no-train-bias", ft.train_bias,
                   "train the background bias");
  ft_cmd->add_flag("--train-aligner,!--no-train-aligner", ft.train_aligner,
                   "train the aligner");
  ft_cmd->add_flag("--loss-on-fused,!--loss-on-pda", ft.loss_on_fused,
                   "train on fused logits (default) or the PDA branch alone");
  ft_cmd->add_option("--seed", ft.stream_seed,
                     "training stream seed (default: the episode seed)");

  EvalOpts ev;
  auto* ev_cmd = app.add_subcommand("eval", "evaluate a head on stored episodes");
  ev_cmd->add_option("--episodes", ev.episodes, "episode directory from 'gen'")->required();
  ev_cmd->add_option("--run", ev.run_dir, "run directory from 'finetune'");
  ev_cmd->add_option("--memory", ev.memory_path, "explicit memory file");
  ev_cmd->add_option("--params", ev.params_path, "explicit params file");
  ev_cmd->add_option("--k", ev.k, "slots per class for support-only initialization");
  ev_cmd->add_option("--alpha", ev.alpha, "fusion weight for the metric branch");
  ev_cmd->add_option("--beta", ev.beta, "fusion weight for the detector logits");
  ev_cmd->add_option("--gamma", ev.gamma, "fusion weight for PCB logits");
  auto* tau_opt = ev_cmd->add_option("--tau", ev.tau, "metric temperature override");
  ev_cmd->add_flag("--use-align", ev.use_align, "enable prototype-conditioned alignment");
  ev_cmd->add_flag("--align-per-class", ev.align_per_class, "one warp per class");
  ev_cmd->add_option("--out", ev.out_path, "metrics CSV path");
  ev_cmd->add_option("--audit", ev.audit_path, "per-RoI audit CSV path");

  AblateOpts ab;
  auto* ab_cmd = app.add_subcommand("ablate", "run an ablation grid");
  ab_cmd->add_option("--episodes", ab.episodes, "episode directory from 'gen'")->required();
  ab_cmd->add_option("--sweep", ab.sweep_path, "sweep spec JSON")->required();
  ab_cmd->add_option("--out", ab.out_dir, "output directory")->required();

  std::string inspect_path;
  auto* in_cmd = app.add_subcommand("inspect-memory", "print a memory file header");
  in_cmd->add_option("file", inspect_path, "memory file")->required();

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("pda");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    ft.momentum_given = momentum_opt->count() > 0;
    ev.tau_given = tau_opt->count() > 0;
    if (gen_cmd->parsed()) return cmd_gen(gen, args);
    if (ft_cmd->parsed()) return cmd_finetune(ft, args);
    if (ev_cmd->parsed()) return cmd_eval(ev, args);
    if (ab_cmd->parsed()) return cmd_ablate(ab, args);
    if (in_cmd->parsed()) return cmd_inspect(inspect_path);
  } catch (const PdaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitConfig;
}

}  // namespace pda::cli
