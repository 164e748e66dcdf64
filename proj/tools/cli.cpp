#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "rhomp/corpus.hpp"
#include "rhomp/eval.hpp"
#include "rhomp/model_io.hpp"
#include "rhomp/random.hpp"
#include "rhomp/text_io.hpp"
#include "rhomp/trainer.hpp"

namespace rhomp::cli {
namespace {

using nlohmann::json;

/// A failure tagged with the pipeline stage it came from.
class Failure : public std::runtime_error {
 public:
  Failure(std::string stage, int code, const std::string& message)
      : std::runtime_error(message), stage_(std::move(stage)), code_(code) {}
  const std::string& stage() const { return stage_; }
  int code() const { return code_; }

 private:
  std::string stage_;
  int code_;
};

template <class F>
decltype(auto) stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const Failure&) {
    throw;
  } catch (const IoError& e) {
    throw Failure(name, kIoError, e.what());
  } catch (const NumericalError& e) {
    throw Failure(name, kNumericalError, e.what());
  } catch (const std::exception& e) {
    throw Failure(name, kDataError, e.what());
  }
}

struct CorpusFlags {
  std::string input;
  std::string format = "ws";
  std::uint64_t min_count = 20;
};

struct FitFlags {
  std::string family = "rhomp";
  std::size_t order = 2;
  std::optional<double> alpha;
  std::optional<double> beta;
  bool auto_alpha = false;
  std::size_t nodes = 15;
  double step = 1.0;
  double tol = 1e-5;
  std::size_t max_iters = 500;
};

struct SplitFlags {
  double split = 0.6;
  std::uint64_t seed = 0;
};

unsigned g_threads = 1;

TrailFormat parse_format(const std::string& f) {
  if (f == "ws") return TrailFormat::Whitespace;
  if (f == "csv") return TrailFormat::Comma;
  throw DataError(fmt::format("unknown trail format '{}' (expected ws or csv)", f));
}

std::ifstream open_input(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open {} '{}'", what, path));
  return in;
}

std::string states_path(const std::string& model) { return model + ".states"; }
std::string trace_path(const std::string& model) { return model + ".trace"; }

ParsedCorpus load_corpus(const CorpusFlags& flags) {
  auto parsed = stage("parse", [&] {
    const auto format = parse_format(flags.format);
    auto in = open_input(flags.input, "trail file");
    return parse_trails(in, format);
  });
  return stage("preprocess", [&] {
    PreprocessOptions opt;
    opt.min_state_count = flags.min_count;
    auto out = preprocess(parsed.states, parsed.corpus, opt);
    if (out.corpus.empty())
      throw DataError(fmt::format("no trails left after preprocessing (min-count {})", flags.min_count));
    return out;
  });
}

// Self-loop collapse that keeps state indices (the vocabulary is fixed).
TrailCorpus collapse_fixed(TrailCorpus c) {
  std::vector<Trail> kept;
  for (auto& t : c.trails) {
    t.erase(std::unique(t.begin(), t.end()), t.end());
    if (t.size() >= 2) kept.push_back(std::move(t));
  }
  c.trails = std::move(kept);
  return c;
}

TrainerConfig trainer_config(const FitFlags& f) {
  TrainerConfig c;
  c.initial_step = f.step;
  c.tolerance = f.tol;
  c.max_iterations = f.max_iters;
  c.threads = g_threads;
  c.validate();
  return c;
}

FamilyOptions family_options(const FitFlags& f) {
  if (f.auto_alpha && f.alpha) throw DataError("--auto-alpha and --alpha are mutually exclusive");
  FamilyOptions o;
  o.trainer = trainer_config(f);
  o.n_nodes = f.nodes;
  o.alpha = f.alpha;
  o.beta = f.beta;
  return o;
}

std::vector<std::size_t> checked_ks(std::vector<std::size_t> ks) {
  if (ks.empty()) throw DataError("--ks needs at least one value");
  for (auto k : ks)
    if (k < 1) throw DataError("--ks values must be at least 1");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

json report_row(std::string_view family, std::size_t order, const json& trial, std::string_view split,
                const EvalReport& r) {
  json precision = json::object();
  for (std::size_t q = 0; q < r.ks.size(); ++q) precision[std::to_string(r.ks[q])] = r.precision[q];
  return json{{"family", family}, {"order", order},     {"trial", trial},         {"split", split},
              {"mrr", r.mrr},     {"precision", precision}, {"n_transitions", r.n_transitions}};
}

// Mean and sample standard deviation rows over the trials of one split.
void add_summary(json& rows, std::string_view family, std::size_t order, std::string_view split,
                 const std::vector<EvalReport>& reports) {
  if (reports.empty()) return;
  const double n = static_cast<double>(reports.size());
  auto stats = [&](auto get) {
    double mean = 0.0;
    for (const auto& r : reports) mean += get(r) / n;
    double ss = 0.0;
    for (const auto& r : reports) ss += (get(r) - mean) * (get(r) - mean);
    return std::pair{mean, reports.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0};
  };
  json mean_p = json::object(), sd_p = json::object();
  const auto& ks = reports.front().ks;
  for (std::size_t q = 0; q < ks.size(); ++q) {
    auto [m, s] = stats([q](const EvalReport& r) { return r.precision[q]; });
    mean_p[std::to_string(ks[q])] = m;
    sd_p[std::to_string(ks[q])] = s;
  }
  auto [mrr_mean, mrr_sd] = stats([](const EvalReport& r) { return r.mrr; });
  auto [nt_mean, nt_sd] = stats([](const EvalReport& r) { return static_cast<double>(r.n_transitions); });
  rows.push_back(json{{"family", family}, {"order", order}, {"trial", "mean"}, {"split", split},
                      {"mrr", mrr_mean}, {"precision", mean_p}, {"n_transitions", nt_mean}});
  rows.push_back(json{{"family", family}, {"order", order}, {"trial", "sd"}, {"split", split},
                      {"mrr", mrr_sd}, {"precision", sd_p}, {"n_transitions", nt_sd}});
}

void write_text(const std::string& path, std::ostream& fallback, const std::string& text) {
  if (path.empty()) {
    fallback << text;
    return;
  }
  write_file_atomic(path, [&](std::ostream& o) { o << text; });
}

void write_trace(const std::string& path, const std::vector<std::pair<std::string, FitTrace>>& traces) {
  write_file_atomic(path, [&](std::ostream& o) {
    o << "fit\tattempt\tobjective\taccepted\n";
    for (const auto& [name, trace] : traces)
      for (std::size_t k = 0; k < trace.objectives.size(); ++k)
        o << name << '\t' << k << '\t' << format_real(trace.objectives[k]) << '\t'
          << (trace.accepted[k] ? 1 : 0) << '\n';
  });
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  CorpusFlags corpus;
  FitFlags fit;
  std::optional<double> split;
  std::uint64_t seed = 0;
  std::string output;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const Family family = stage("config", [&] { return parse_family(a.fit.family); });
  const auto options = stage("config", [&] {
    if (a.fit.order < 1) throw DataError("--order must be at least 1");
    return family_options(a.fit);
  });
  auto data = load_corpus(a.corpus);
  TrailCorpus train = data.corpus;
  if (a.split) train = stage("split", [&] { return split_train_test(data.corpus, *a.split, a.seed).first; });
  const auto counts = stage("count", [&] { return count_transitions(train, a.fit.order, g_threads); });

  json summary{{"family", family_name(family)},
               {"order", a.fit.order},
               {"n_states", data.states.size()},
               {"n_trails", train.size()},
               {"n_transitions", train.num_transitions()}};
  std::vector<std::pair<std::string, FitTrace>> traces;
  std::optional<RhompModel> model;
  bool stalled = false;

  stage("fit", [&] {
    if (family != Family::Rhomp) {
      // Fitting validates the counts; the file stores the counts themselves.
      make_predictor(CountModelFile{family, counts});
      return;
    }
    const std::size_t m = a.fit.order;
    FitResult result;
    if (m == 1) {
      const double w[] = {1.0};
      result = fit_fixed_weights(counts, w, options.trainer);
    } else if (m == 2 && options.alpha) {
      const double w[] = {*options.alpha, 1.0 - *options.alpha};
      result = fit_fixed_weights(counts, w, options.trainer);
      summary["alpha"] = *options.alpha;
    } else if (m == 2) {
      auto sel = select_alpha(counts, options.n_nodes, options.trainer);
      summary["alpha"] = sel.alpha;
      summary["alpha_nodes"] = sel.nodes;
      summary["alpha_node_objectives"] = sel.node_objectives;
      result = std::move(sel.fit);
    } else {
      double beta;
      if (options.beta) {
        beta = *options.beta;
      } else if (options.alpha) {
        beta = beta_from_alpha(*options.alpha);
        summary["alpha"] = *options.alpha;
      } else {
        auto sel = select_alpha(counts.truncated(2), options.n_nodes, options.trainer);
        summary["alpha"] = sel.alpha;
        beta = beta_from_alpha(sel.alpha);
      }
      summary["beta"] = beta;
      result = fit_fixed_weights(counts, weights_from_beta(beta, m), options.trainer);
    }
    summary["objective"] = result.trace.final_objective();
    summary["iterations"] = result.trace.iterations;
    summary["converged"] = result.trace.converged;
    summary["stalled"] = result.trace.stalled;
    stalled = result.trace.stalled;
    traces.emplace_back(fmt::format("order{}", m), result.trace);
    model = std::move(result.model);
  });

  stage("write", [&] {
    if (a.output.empty()) throw DataError("--output is required");
    write_file_atomic(a.output, [&](std::ostream& o) {
      if (model) write_rhomp_model(o, *model);
      else write_count_model(o, family, counts);
    });
    write_file_atomic(states_path(a.output), [&](std::ostream& o) { write_states(o, data.states); });
    if (model) write_trace(trace_path(a.output), traces);
  });
  summary["model"] = a.output;
  out << summary.dump(2) << '\n';
  if (stalled) {
    err << "rhomp: stage fit: step size fell below 1e-12 before convergence; best iterate written\n";
    return kNumericalError;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  CorpusFlags corpus;
  FitFlags fit;
  SplitFlags split;
  bool no_split = false;
  std::vector<std::string> models;
  bool fit_cascade = false;
  std::optional<std::size_t> repetitions;
  std::vector<std::size_t> ks{1, 2, 3, 4, 5};
  bool with_train = false;
  std::string output;
  std::string buckets;
  std::uint64_t bucket_transitions = 1000;
  std::size_t bucket_states = 5;
  std::optional<std::size_t> bucket_k;
};

struct Trial {
  EvalReport test;
  std::optional<EvalReport> train;
  std::vector<std::uint64_t> train_counts;
  json extra = json::object();
};

std::vector<std::uint64_t> occurrences(const TrailCorpus& c) {
  std::vector<std::uint64_t> occ(c.num_states, 0);
  for (const auto& t : c.trails)
    for (auto s : t) ++occ[s];
  return occ;
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto ks = stage("config", [&] { return checked_ks(a.ks); });
  const bool use_models = !a.models.empty();
  stage("config", [&] {
    if (use_models == a.fit_cascade)
      throw DataError("evaluate needs either --model files (one per order 1..m) or --fit-cascade");
    if (use_models && a.repetitions.value_or(1) != 1)
      throw DataError("--repetitions needs --fit-cascade; stored models come from a single split");
    if (a.no_split && (a.fit_cascade || a.with_train))
      throw DataError("--no-split only applies to stored models without --with-train");
    if (a.repetitions && *a.repetitions < 1) throw DataError("--repetitions must be at least 1");
  });

  std::string family_label;
  std::size_t order = 0;
  std::vector<Trial> trials;

  if (use_models) {
    std::vector<ModelFile> files;
    StateSpace vocab;
    stage("load", [&] {
      std::optional<std::vector<std::string>> tokens;
      for (const auto& path : a.models) {
        auto in = open_input(path, "model file");
        files.push_back(read_model(in));
        auto sin = open_input(states_path(path), "state list");
        auto states = read_states(sin);
        if (tokens && *tokens != states.tokens())
          throw DataError(fmt::format("model '{}' was trained on a different state space", path));
        tokens = states.tokens();
        vocab = std::move(states);
      }
    });
    Cascade cascade = stage("load", [&] {
      std::map<std::size_t, std::size_t> by_order;
      std::set<Family> families;
      for (std::size_t k = 0; k < files.size(); ++k) {
        if (!by_order.emplace(model_order(files[k]), k).second)
          throw DataError(fmt::format("two models of order {}", model_order(files[k])));
        families.insert(model_family(files[k]));
      }
      order = by_order.rbegin()->first;
      for (std::size_t r = 1; r <= order; ++r)
        if (!by_order.count(r))
          throw DataError(fmt::format("missing cascade member of order {} (pass every order 1..{} or use --fit-cascade)",
                                      r, order));
      std::vector<std::shared_ptr<const Predictor>> members;
      for (const auto& [r, k] : by_order) {
        auto p = make_predictor(files[k]);
        const std::size_t n = std::holds_alternative<RhompModel>(files[k])
                                  ? std::get<RhompModel>(files[k]).num_states()
                                  : std::get<CountModelFile>(files[k]).counts.num_states();
        if (n != vocab.size())
          throw DataError(fmt::format("model of order {} has {} states, state list has {}", r, n, vocab.size()));
        members.push_back(std::move(p));
      }
      family_label = families.size() == 1 ? std::string(family_name(*families.begin())) : "mixed";
      return Cascade(std::move(members));
    });
    auto corpus = stage("parse", [&] {
      const auto format = parse_format(a.corpus.format);
      auto in = open_input(a.corpus.input, "trail file");
      return collapse_fixed(parse_trails(in, format, vocab));
    });
    Trial t;
    TrailCorpus test = corpus, train{corpus.num_states, {}};
    if (!a.no_split) {
      auto parts = stage("split", [&] { return split_train_test(corpus, a.split.split, a.split.seed); });
      train = std::move(parts.first);
      test = std::move(parts.second);
    }
    t.train_counts = occurrences(train);
    stage("evaluate", [&] {
      t.test = evaluate(cascade, test, ks, t.train_counts, g_threads);
      if (a.with_train) t.train = evaluate(cascade, train, ks, t.train_counts, g_threads);
    });
    trials.push_back(std::move(t));
  } else {
    const Family family = stage("config", [&] { return parse_family(a.fit.family); });
    const auto options = stage("config", [&] {
      if (a.fit.order < 1) throw DataError("--order must be at least 1");
      return family_options(a.fit);
    });
    family_label = family_name(family);
    order = a.fit.order;
    auto data = load_corpus(a.corpus);
    const std::size_t reps = a.repetitions.value_or(5);
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const std::uint64_t seed = a.split.seed + rep;
      auto [train, test] = stage("split", [&] { return split_train_test(data.corpus, a.split.split, seed); });
      auto counts = stage("count", [&] { return count_transitions(train, order, g_threads); });
      auto fit = stage("fit", [&] { return fit_cascade(family, counts, order, options); });
      if (fit.stalled) throw Failure("fit", kNumericalError, "step size fell below 1e-12 before convergence");
      Trial t;
      t.extra["seed"] = seed;
      if (fit.alpha) t.extra["alpha"] = *fit.alpha;
      if (fit.beta) t.extra["beta"] = *fit.beta;
      t.train_counts.assign(counts.unigram().begin(), counts.unigram().end());
      stage("evaluate", [&] {
        t.test = evaluate(fit.cascade, test, ks, t.train_counts, g_threads);
        if (a.with_train) t.train = evaluate(fit.cascade, train, ks, t.train_counts, g_threads);
      });
      trials.push_back(std::move(t));
    }
  }

  json rows = json::array();
  std::vector<EvalReport> tests, trains;
  for (std::size_t k = 0; k < trials.size(); ++k) {
    auto row = report_row(family_label, order, k, "test", trials[k].test);
    row.update(trials[k].extra);
    rows.push_back(row);
    tests.push_back(trials[k].test);
    if (trials[k].train) {
      auto tr = report_row(family_label, order, k, "train", *trials[k].train);
      tr.update(trials[k].extra);
      rows.push_back(tr);
      trains.push_back(*trials[k].train);
    }
  }
  add_summary(rows, family_label, order, "test", tests);
  add_summary(rows, family_label, order, "train", trains);
  json report{{"family", family_label}, {"order", order}, {"ks", ks}, {"rows", rows}};

  stage("write", [&] {
    write_text(a.output, out, report.dump(2) + "\n");
    if (a.buckets.empty()) return;
    const std::size_t k = a.bucket_k.value_or(ks.front());
    auto buckets = frequency_buckets(trials.front().test, a.bucket_transitions, a.bucket_states, k);
    write_file_atomic(a.buckets, [&](std::ostream& o) {
      o << "bucket_index,median_train_count,precision\n";
      for (std::size_t b = 0; b < buckets.size(); ++b)
        o << b << ',' << format_real(buckets[b].median_train_count) << ',' << format_real(buckets[b].precision)
          << '\n';
    });
  });
  return kOk;
}

// ---------------------------------------------------------------------------
// sample

struct SampleArgs {
  std::string model;
  std::string output;
  std::string format = "ws";
  std::size_t trails = 10;
  std::size_t length = 50;
  std::uint64_t seed = 0;
};

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  const auto format = stage("config", [&] {
    if (a.trails < 1) throw DataError("--trails must be at least 1");
    return parse_format(a.format);
  });
  RhompModel model;
  StateSpace states;
  stage("load", [&] {
    auto in = open_input(a.model, "model file");
    auto file = read_model(in);
    if (!std::holds_alternative<RhompModel>(file)) throw DataError("sample needs a rhomp model file");
    model = std::get<RhompModel>(std::move(file));
    if (std::filesystem::exists(states_path(a.model))) {
      auto sin = open_input(states_path(a.model), "state list");
      states = read_states(sin);
      if (states.size() != model.num_states())
        throw DataError(fmt::format("state list has {} states, model has {}", states.size(), model.num_states()));
    } else {
      std::vector<std::string> tokens;
      for (std::size_t s = 0; s < model.num_states(); ++s) tokens.push_back(std::to_string(s));
      states = StateSpace(std::move(tokens));
    }
  });
  TrailCorpus corpus{model.num_states(), {}};
  stage("sample", [&] {
    Rng rng(a.seed);
    // A trained model can reach a history with no successors in any slot;
    // such a trail is redrawn from a fresh warm start.
    constexpr int kAttempts = 100;
    for (std::size_t k = 0; k < a.trails; ++k) {
      for (int attempt = 1;; ++attempt) {
        Trail warm(model.order());
        for (auto& s : warm) s = static_cast<StateId>(rng.below(model.num_states()));
        try {
          corpus.trails.push_back(sample_trail(model, a.length, rng.next(), warm));
          break;
        } catch (const DataError&) {
          if (attempt == kAttempts) throw;
        }
      }
    }
  });
  stage("write", [&] {
    if (a.output.empty()) {
      write_trails(out, states, corpus, format);
      return;
    }
    write_file_atomic(a.output, [&](std::ostream& o) { write_trails(o, states, corpus, format); });
  });
  return kOk;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
  CorpusFlags corpus;
  FitFlags fit;
  SplitFlags split;
  std::vector<std::string> families{"mc", "kneser", "rhomp"};
  std::vector<std::size_t> ks{1, 2, 3, 4, 5};
  std::string output;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const auto ks = stage("config", [&] { return checked_ks(a.ks); });
  std::vector<Family> families;
  const auto options = stage("config", [&] {
    for (const auto& f : a.families) families.push_back(parse_family(f));
    if (a.fit.order < 1) throw DataError("--order must be at least 1");
    return family_options(a.fit);
  });
  auto data = load_corpus(a.corpus);
  auto [train, test] = stage("split", [&] { return split_train_test(data.corpus, a.split.split, a.split.seed); });
  auto rows = stage("sweep", [&] { return order_sweep(train, test, a.fit.order, families, ks, options); });
  std::string csv = "family,order,k,precision,mrr\n";
  for (const auto& row : rows)
    for (std::size_t q = 0; q < row.report.ks.size(); ++q)
      csv += fmt::format("{},{},{},{},{}\n", family_name(row.family), row.order, row.report.ks[q],
                         format_real(row.report.precision[q]), format_real(row.report.mrr));
  stage("write", [&] { write_text(a.output, out, csv); });
  return kOk;
}

// ---------------------------------------------------------------------------

void add_corpus_flags(CLI::App* app, CorpusFlags& c) {
  app->add_option("--input", c.input, "Trail file, one trail per line")->required();
  app->add_option("--format", c.format, "Trail file format")->check(CLI::IsMember({"ws", "csv"}));
  app->add_option("--min-count", c.min_count, "Drop states occurring at most this many times");
}

void add_fit_flags(CLI::App* app, FitFlags& f, bool family) {
  if (family) app->add_option("--family", f.family, "Model family")->check(CLI::IsMember({"mc", "kneser", "rhomp"}));
  app->add_option("--order", f.order, "Model order");
  app->add_option("--alpha", f.alpha, "Fixed order-2 weight on the most recent state");
  app->add_option("--beta", f.beta, "Geometric weight ratio for orders above 2");
  app->add_flag("--auto-alpha", f.auto_alpha, "Choose alpha by polynomial interpolation (default without --alpha)");
  app->add_option("--nodes", f.nodes, "Interpolation nodes for alpha selection");
  app->add_option("--step", f.step, "Initial (and maximum) step size");
  app->add_option("--tol", f.tol, "Stop when the mean relative improvement over five accepted steps falls below this");
  app->add_option("--max-iters", f.max_iters, "Cap on accepted iterations");
}

void add_split_flags(CLI::App* app, SplitFlags& s) {
  app->add_option("--split", s.split, "Fraction of trails used for training");
  app->add_option("--seed", s.seed, "Seed for the train/test split");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Retrospective higher-order Markov process trainer, evaluator and sampler", "rhomp"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_config("--config", "", "INI or TOML file with option defaults");
  unsigned threads = 1;
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads (default: RHOMP_THREADS or 1)")
                          ->check(CLI::PositiveNumber);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Fit one model and write it with its state list and trace");
  add_corpus_flags(train_cmd, train.corpus);
  add_fit_flags(train_cmd, train.fit, true);
  train_cmd->add_option("--split", train.split, "Train only on this fraction of trails");
  train_cmd->add_option("--seed", train.seed, "Seed for --split");
  train_cmd->add_option("--output", train.output, "Model file")->required();

  EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score stored or freshly fitted cascades on held-out trails");
  add_corpus_flags(eval_cmd, eval.corpus);
  add_fit_flags(eval_cmd, eval.fit, true);
  add_split_flags(eval_cmd, eval.split);
  eval_cmd->add_flag("--no-split", eval.no_split, "Evaluate stored models on the whole input");
  eval_cmd->add_option("--model", eval.models, "Model file; repeat for every order 1..m");
  eval_cmd->add_flag("--fit-cascade", eval.fit_cascade, "Train orders 1..m on each split instead of loading models");
  eval_cmd->add_option("--repetitions", eval.repetitions, "Number of seeded splits (default 5 with --fit-cascade)");
  eval_cmd->add_option("--ks", eval.ks, "Cutoffs for precision@k")->delimiter(',');
  eval_cmd->add_flag("--with-train", eval.with_train, "Also report scores on the training side");
  eval_cmd->add_option("--output", eval.output, "JSON report (stdout when absent)");
  eval_cmd->add_option("--buckets", eval.buckets, "CSV of precision by training-frequency bucket");
  eval_cmd->add_option("--bucket-transitions", eval.bucket_transitions, "Minimum test transitions per bucket");
  eval_cmd->add_option("--bucket-states", eval.bucket_states, "Minimum states per bucket");
  eval_cmd->add_option("--bucket-k", eval.bucket_k, "Cutoff used for bucket precision (default: smallest k)");

  SampleArgs sample;
  auto* sample_cmd = app.add_subcommand("sample", "Generate trails from a rhomp model");
  sample_cmd->add_option("--model", sample.model, "Model file")->required();
  sample_cmd->add_option("--output", sample.output, "Trail file (stdout when absent)");
  sample_cmd->add_option("--format", sample.format, "Trail file format")->check(CLI::IsMember({"ws", "csv"}));
  sample_cmd->add_option("--trails", sample.trails, "Number of trails");
  sample_cmd->add_option("--length", sample.length, "States per trail, including the warm start");
  sample_cmd->add_option("--seed", sample.seed, "Sampling seed");

  SweepArgs sweep;
  sweep.fit.order = 3;
  auto* sweep_cmd = app.add_subcommand("sweep", "Precision and MRR by family and order");
  add_corpus_flags(sweep_cmd, sweep.corpus);
  add_fit_flags(sweep_cmd, sweep.fit, false);
  add_split_flags(sweep_cmd, sweep.split);
  sweep_cmd->add_option("--family", sweep.families, "Families to compare (repeatable)")
      ->check(CLI::IsMember({"mc", "kneser", "rhomp"}));
  sweep_cmd->add_option("--ks", sweep.ks, "Cutoffs for precision@k")->delimiter(',');
  sweep_cmd->add_option("--output", sweep.output, "CSV table (stdout when absent)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "rhomp: stage arguments: " << e.what() << '\n';
    return kDataError;
  }
  // Read by hand: CLI11 silently drops environment values that fail validation.
  if (threads_opt->count() == 0) {
    if (const char* env = std::getenv("RHOMP_THREADS"); env && *env) {
      try {
        const auto n = parse_uint(env, "RHOMP_THREADS");
        if (n == 0 || n > 4096) throw DataError("RHOMP_THREADS must be between 1 and 4096");
        threads = static_cast<unsigned>(n);
      } catch (const std::exception& e) {
        err << "rhomp: stage arguments: " << e.what() << '\n';
        return kDataError;
      }
    }
  }
  g_threads = threads;

  try {
    if (*train_cmd) return cmd_train(train, out, err);
    if (*eval_cmd) return cmd_evaluate(eval, out);
    if (*sample_cmd) return cmd_sample(sample, out);
    return cmd_sweep(sweep, out);
  } catch (const Failure& f) {
    err << "rhomp: stage " << f.stage() << ": " << f.what() << '\n';
    return f.code();
  } catch (const std::exception& e) {
    err << "rhomp: " << e.what() << '\n';
    return kDataError;
  }
}

}  // namespace rhomp::cli
