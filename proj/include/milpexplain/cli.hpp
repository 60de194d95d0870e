#pragma once

// The `milpexplain` command line. Everything lives here so tests can drive
// the commands in-process through run_cli(); tools/milpexplain.cpp is a thin
// main().
//
// Exit codes: 0 success, 1 verification failure, 2 input/schema error,
// 3 I/O or parse error, 4 solver inconclusive.

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "milpexplain/encoding.hpp"
#include "milpexplain/error.hpp"
#include "milpexplain/explain.hpp"
#include "milpexplain/milp.hpp"
#include "milpexplain/model.hpp"

namespace milpexplain::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitInconclusive = 4;

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::io:
    case ErrorCode::syntax: return kExitIo;
    case ErrorCode::inconclusive:
    case ErrorCode::numerical: return kExitInconclusive;
    default: return kExitInput;
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::io, "error reading '" + path + "'");
  return buffer.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path + "'");
  out << content;
  out.flush();
  if (!out) throw Error(ErrorCode::io, "error writing '" + path + "'");
}

inline std::string dump(const nlohmann::json& doc) { return doc.dump(2) + "\n"; }

struct LoadedModel {
  Ann ann;
  std::string hash;
};

inline LoadedModel load_model_file(const std::string& path) {
  const std::string text = read_file(path);
  return {load_model(text), content_hash(text)};
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Population standard deviation (divides by n).
inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(var / static_cast<double>(xs.size()));
  return out;
}

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

inline std::string format_mean_std(const MeanStd& m, int digits = 4) {
  return fixed(m.mean, digits) + " ± " + fixed(m.std, digits);
}

inline std::string percent_delta(double reference, double value) {
  if (reference == 0.0) return "n/a";
  const double pct = 100.0 * (value - reference) / reference;
  std::ostringstream s;
  s << std::showpos << std::fixed << std::setprecision(1) << pct << "%";
  return s.str();
}

/// Shortest text that reads back as the same double.
inline std::string display_number(double v) {
  char buffer[32];
  const auto result = std::to_chars(buffer, buffer + sizeof buffer, v);
  return std::string(buffer, result.ptr);
}

inline std::string describe_kept(const Ann& ann, const Explanation& e) {
  std::string out = "{";
  for (std::size_t k = 0; k < e.kept.size(); ++k) {
    if (k) out += ", ";
    out += ann.features[e.kept[k].first].name + "=" + display_number(e.kept[k].second);
  }
  return out + "}";
}

/// Seed used by `--order seed` when none is given; MILPEXPLAIN_SEED overrides.
inline std::uint64_t default_seed() {
  if (const char* env = std::getenv("MILPEXPLAIN_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw Error(ErrorCode::schema, std::string("MILPEXPLAIN_SEED is not an integer: ") + env);
    }
  }
  return 0;
}

inline NetworkBounds obtain_bounds(const LoadedModel& model, EncodingKind kind,
                                   const std::string& cache_path) {
  if (!cache_path.empty()) {
    const auto doc = nlohmann::json::parse(read_file(cache_path), nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorCode::syntax, "bounds file '" + cache_path + "' does not parse");
    if (doc.value("model_hash", "") != model.hash) {
      throw Error(ErrorCode::schema, "bounds file '" + cache_path + "' belongs to a different model");
    }
    NetworkBounds bounds = bounds_from_json(doc, model.ann);
    if (bounds.kind != kind) {
      throw Error(ErrorCode::schema, "bounds file '" + cache_path + "' was computed for the " +
                                         to_string(bounds.kind) + " encoding");
    }
    return bounds;
  }
  return tighten_bounds(model.ann, kind);
}

// ---------------------------------------------------------------------------

inline int cmd_validate(const std::string& model_path, std::ostream& out) {
  const LoadedModel model = load_model_file(model_path);
  const Ann& ann = model.ann;
  out << "model " << (ann.name.empty() ? "(unnamed)" : ann.name) << " ok\n";
  out << "  architecture: " << ann.architecture() << "\n";
  out << "  hidden neurons: " << ann.hidden_neuron_count() << "\n";
  std::map<std::string, std::size_t> kinds;
  for (const auto& f : ann.features) ++kinds[to_string(f.kind)];
  out << "  features:";
  for (const auto& [kind, count] : kinds) out << " " << count << " " << kind;
  out << "\n  classes:";
  for (const auto& c : ann.classes) out << " " << c;
  out << "\n  hash: " << model.hash << "\n";
  return kExitOk;
}

inline void print_bounds_summary(const NetworkBounds& bounds, std::ostream& out) {
  for (std::size_t l = 0; l < bounds.hidden.size(); ++l) {
    double lo = kInfinity;
    double hi = -kInfinity;
    std::size_t active = 0;
    std::size_t inactive = 0;
    for (const auto& nb : bounds.hidden[l]) {
      lo = std::min(lo, nb.pre_lb);
      hi = std::max(hi, nb.pre_ub);
      active += nb.stable_active();
      inactive += nb.stable_inactive();
    }
    out << "  layer " << l + 1 << ": " << bounds.hidden[l].size() << " neurons, pre-activation in ["
        << display_number(lo) << ", " << display_number(hi) << "], " << active
        << " always active, " << inactive << " always inactive\n";
  }
  for (std::size_t j = 0; j < bounds.out_lb.size(); ++j) {
    out << "  output " << j << ": [" << display_number(bounds.out_lb[j]) << ", "
        << display_number(bounds.out_ub[j]) << "]\n";
  }
}

inline int cmd_bounds(const std::string& model_path, EncodingKind kind, const std::string& out_path,
                      std::ostream& out) {
  const LoadedModel model = load_model_file(model_path);
  // A matching cache is left untouched so reruns are byte-identical.
  if (std::filesystem::exists(out_path)) {
    const auto doc = nlohmann::json::parse(read_file(out_path), nullptr, false);
    if (!doc.is_discarded() && doc.value("model_hash", "") == model.hash &&
        doc.value("encoding", "") == to_string(kind)) {
      try {
        const NetworkBounds cached = bounds_from_json(doc, model.ann);
        out << "bounds cache " << out_path << " is current (tightened in "
            << fixed(cached.tighten_seconds) << " s)\n";
        print_bounds_summary(cached, out);
        return kExitOk;
      } catch (const Error&) {
        // fall through and recompute
      }
    }
  }
  const NetworkBounds bounds = tighten_bounds(model.ann, kind);
  write_file(out_path, dump(bounds_to_json(bounds, model.ann.name, model.hash)));
  out << "tightened " << to_string(kind) << " bounds in " << fixed(bounds.tighten_seconds)
      << " s -> " << out_path << "\n";
  print_bounds_summary(bounds, out);
  return kExitOk;
}

struct EncodeArgs {
  std::string model_path;
  EncodingKind kind = EncodingKind::indicator;
  std::optional<std::size_t> instance_index;
  std::string dataset_path;
  bool negate = false;
  std::string out_path;
  std::string bounds_path;
};

inline int cmd_encode(const EncodeArgs& args, std::ostream& out) {
  const LoadedModel model = load_model_file(args.model_path);
  const Ann& ann = model.ann;
  std::optional<Instance> instance;
  if (args.instance_index || !args.dataset_path.empty()) {
    if (!args.instance_index || args.dataset_path.empty()) {
      throw Error(ErrorCode::schema, "--instance-index and --dataset go together");
    }
    const auto instances = load_instances(ann, read_file(args.dataset_path));
    if (*args.instance_index >= instances.size()) {
      throw Error(ErrorCode::dimension, "instance index " + std::to_string(*args.instance_index) +
                                            " out of range (dataset has " +
                                            std::to_string(instances.size()) + ")");
    }
    instance = instances[*args.instance_index];
  }
  if (args.negate && !instance) throw Error(ErrorCode::schema, "--negate needs an instance");

  EncodedNetwork enc = encode(ann, obtain_bounds(model, args.kind, args.bounds_path));
  const EncodingCounts counts = count_stats(enc);
  if (instance) {
    for (std::size_t i = 0; i < enc.inputs.size(); ++i) {
      enc.model.set_bounds(enc.inputs[i], (*instance)[i], (*instance)[i]);
    }
  }
  if (args.negate) attach_negation(enc, predict(ann, *instance));
  write_file(args.out_path, export_lp(enc.model));
  out << to_string(args.kind) << " encoding of " << ann.architecture() << ": " << counts.real_vars
      << " real variables, " << counts.binary_vars << " binary variables, " << counts.constraints
      << " constraints";
  if (args.negate) out << " (before the negated prediction)";
  out << "\n";
  out << "wrote " << args.out_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// explain

/// Explains `indices` of `instances` with copies of `base`, one copy per
/// instance. Tie-margin rejections are recorded; other errors propagate.
inline std::vector<InstanceReport> explain_instances(const Ann& ann, const EncodedNetwork& base,
                                                     const std::vector<Instance>& instances,
                                                     const std::vector<std::size_t>& indices,
                                                     const FeatureOrder& order, std::size_t jobs) {
  std::vector<InstanceReport> results(indices.size());
  const auto permutation = order.permutation(ann.num_inputs());
  auto work = [&](std::size_t k) {
    InstanceReport& entry = results[k];
    entry.index = indices[k];
    const Instance& point = instances[indices[k]];
    try {
      require_margin(ann, point);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::tie_margin) throw;
      entry.status = "rejected";
      entry.message = e.what();
      return;
    }
    EncodedNetwork enc = base;
    attach_negation(enc, predict(ann, point));
    entry.explanation = minimal_explanation(ann, enc, point, permutation);
  };

  jobs = std::max<std::size_t>(1, std::min(jobs, indices.size()));
  if (jobs == 1) {
    for (std::size_t k = 0; k < indices.size(); ++k) work(k);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t k; (k = next.fetch_add(1)) < indices.size();) {
        try {
          work(k);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = indices.size();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

struct ExplainArgs {
  std::string model_path;
  std::string dataset_path;
  EncodingKind kind = EncodingKind::indicator;
  std::string order = "natural";
  std::string out_path;
  std::vector<std::size_t> indices;
  std::size_t jobs = 1;
  std::string bounds_path;
  bool zero_timings = false;
};

inline int cmd_explain(const ExplainArgs& args, std::ostream& out) {
  const LoadedModel model = load_model_file(args.model_path);
  const Ann& ann = model.ann;
  const FeatureOrder order = parse_feature_order(args.order, default_seed());
  const auto instances = load_instances(ann, read_file(args.dataset_path));
  if (instances.empty()) throw Error(ErrorCode::schema, "dataset '" + args.dataset_path + "' has no rows");
  std::vector<std::size_t> indices = args.indices;
  if (indices.empty()) {
    for (std::size_t k = 0; k < instances.size(); ++k) indices.push_back(k);
  }
  for (std::size_t k : indices) {
    if (k >= instances.size()) {
      throw Error(ErrorCode::dimension, "instance index " + std::to_string(k) + " out of range");
    }
  }

  const EncodedNetwork base = encode(ann, obtain_bounds(model, args.kind, args.bounds_path));
  out << to_string(args.kind) << " encoding built in " << fixed(base.build_seconds())
      << " s; order " << order.describe() << "\n";

  ExplanationReport report;
  report.model_name = ann.name;
  report.model_hash = model.hash;
  report.encoding = args.kind;
  report.order = order.describe();
  report.instances = explain_instances(ann, base, instances, indices, order, args.jobs);

  std::vector<double> times;
  for (const auto& entry : report.instances) {
    out << "  #" << entry.index << " ";
    if (entry.status != "ok") {
      out << "rejected: " << entry.message << "\n";
      continue;
    }
    const auto& e = entry.explanation;
    out << ann.classes[e.predicted_class] << " kept " << describe_kept(ann, e) << " ("
        << e.kept.size() << "/" << ann.num_inputs() << ") in " << fixed(e.total_seconds) << " s\n";
    times.push_back(e.total_seconds);
  }
  out << "explanation time: " << format_mean_std(mean_std(times)) << " s over " << times.size()
      << " instance(s)\n";
  write_file(args.out_path, dump(report_to_json(report, ann, args.zero_timings)));
  out << "wrote " << args.out_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
  std::string model_path;
  std::string dataset_path;
  std::string report_path;
  std::optional<EncodingKind> kind;
};

inline int cmd_verify(const VerifyArgs& args, std::ostream& out) {
  const LoadedModel model = load_model_file(args.model_path);
  const Ann& ann = model.ann;
  const auto instances = load_instances(ann, read_file(args.dataset_path));
  const auto doc = nlohmann::json::parse(read_file(args.report_path), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::syntax, "report '" + args.report_path + "' does not parse");
  const ExplanationReport report = report_from_json(doc);
  if (report.model_hash != model.hash) {
    throw Error(ErrorCode::schema, "report was produced for model hash " + report.model_hash +
                                       ", model file hashes to " + model.hash);
  }
  const EncodingKind kind = args.kind.value_or(report.encoding);

  std::size_t checked = 0;
  std::size_t failed = 0;
  for (const auto& entry : report.instances) {
    if (entry.index >= instances.size()) {
      throw Error(ErrorCode::dimension, "report instance " + std::to_string(entry.index) +
                                            " is not in the dataset");
    }
    const Instance& point = instances[entry.index];
    ++checked;
    if (entry.status != "ok") {
      const auto logits = forward(ann, point).logits;
      if (prediction_margin(logits, argmax_lowest(logits)) >= kTieTolerance) {
        ++failed;
        out << "  #" << entry.index << " FAIL rejected, but its margin is above the tie tolerance\n";
      } else {
        out << "  #" << entry.index << " ok (rejected tie)\n";
      }
      continue;
    }
    for (const auto& [i, v] : entry.explanation.kept) {
      if (i >= ann.num_inputs()) {
        throw Error(ErrorCode::dimension, "report instance " + std::to_string(entry.index) +
                                              " names feature " + std::to_string(i));
      }
    }
    const VerificationReport result = verify_explanation(ann, kind, point, entry.explanation);
    if (result.passed()) {
      out << "  #" << entry.index << " ok\n";
      continue;
    }
    ++failed;
    for (const auto& f : result.failures) {
      out << "  #" << entry.index << " FAIL " << to_string(f.check);
      if (f.feature) out << " [" << ann.features[*f.feature].name << "]";
      out << ": " << f.message << "\n";
    }
  }
  out << checked - failed << "/" << checked << " explanations verified with the " << to_string(kind)
      << " encoding\n";
  return failed == 0 ? kExitOk : kExitVerifyFailed;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string model_path;
  std::string dataset_path;
  std::size_t rebuilds = 10;
  std::string order = "natural";
  std::string out_path;
  std::size_t jobs = 1;
};

struct EncodingBench {
  EncodingKind kind;
  EncodingCounts counts;
  std::vector<double> build_seconds;
  std::vector<double> tighten_seconds;
  std::vector<double> explain_seconds;
  MeanStd build;
  MeanStd tighten;
  MeanStd explain;
  double overall = 0.0;
  std::vector<InstanceReport> results;
};

inline nlohmann::json bench_to_json(const std::vector<EncodingBench>& runs, const BenchArgs& args,
                                    const LoadedModel& model, std::size_t instance_count,
                                    bool partial, const std::string& problem) {
  nlohmann::json doc;
  doc["model"] = model.ann.name;
  doc["model_hash"] = model.hash;
  doc["architecture"] = model.ann.architecture();
  doc["dataset"] = {{"name", std::filesystem::path(args.dataset_path).filename().string()},
                    {"instances", instance_count}};
  doc["rebuilds"] = args.rebuilds;
  doc["order"] = args.order;
  doc["std"] = "population";
  doc["partial"] = partial;
  if (!problem.empty()) doc["problem"] = problem;
  doc["encodings"] = nlohmann::json::object();
  for (const auto& r : runs) {
    nlohmann::json e;
    e["counts"] = {{"real_vars", r.counts.real_vars},
                   {"binary_vars", r.counts.binary_vars},
                   {"constraints", r.counts.constraints}};
    e["build_mean"] = r.build.mean;
    e["build_std"] = r.build.std;
    e["tighten_mean"] = r.tighten.mean;
    e["tighten_std"] = r.tighten.std;
    e["explain_mean"] = r.explain.mean;
    e["explain_std"] = r.explain.std;
    e["overall"] = r.overall;
    e["explained"] = r.explain_seconds.size();
    doc["encodings"][to_string(r.kind)] = std::move(e);
  }
  if (runs.size() == 2) {
    const auto& ind = runs[0];
    const auto& bm = runs[1];
    auto pct = [](double ref, double v) { return ref == 0.0 ? 0.0 : 100.0 * (v - ref) / ref; };
    doc["build_delta_percent"] = pct(ind.build.mean, bm.build.mean);
    doc["overall_delta_percent"] = pct(ind.overall, bm.overall);
  }
  return doc;
}

inline void print_bench_table(const std::vector<EncodingBench>& runs, std::ostream& out) {
  const std::vector<std::string> head = {"encoding", "reals", "binaries", "constraints",
                                         "build (s)", "exp (s)", "overall (s)"};
  std::vector<std::vector<std::string>> rows = {head};
  for (const auto& r : runs) {
    rows.push_back({to_string(r.kind), std::to_string(r.counts.real_vars),
                    std::to_string(r.counts.binary_vars), std::to_string(r.counts.constraints),
                    format_mean_std(r.build), format_mean_std(r.explain), fixed(r.overall)});
  }
  std::vector<std::size_t> width(head.size(), 0);
  // "±" is two bytes but one column.
  auto visible = [](const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;
    return n;
  };
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], visible(row[c]));
  }
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string pad(width[c] - visible(row[c]), ' ');
      out << (c == 0 ? row[c] + pad : pad + row[c]) << (c + 1 < row.size() ? "  " : "\n");
    }
  }
}

inline int cmd_bench(const BenchArgs& args, std::ostream& out) {
  if (args.rebuilds == 0) throw Error(ErrorCode::schema, "--rebuilds must be positive");
  const LoadedModel model = load_model_file(args.model_path);
  const Ann& ann = model.ann;
  const FeatureOrder order = parse_feature_order(args.order, default_seed());
  const auto instances = load_instances(ann, read_file(args.dataset_path));
  if (instances.empty()) throw Error(ErrorCode::schema, "dataset '" + args.dataset_path + "' has no rows");
  std::vector<std::size_t> indices(instances.size());
  for (std::size_t k = 0; k < indices.size(); ++k) indices[k] = k;

  out << "model " << ann.name << " (" << ann.architecture() << "), dataset "
      << std::filesystem::path(args.dataset_path).filename().string() << " (" << instances.size()
      << " instances), " << args.rebuilds << " rebuilds, order " << order.describe() << "\n";

  std::vector<EncodingBench> runs;
  std::string problem;
  int code = kExitOk;
  try {
    for (EncodingKind kind : {EncodingKind::indicator, EncodingKind::big_m}) {
      EncodingBench run;
      run.kind = kind;
      std::optional<EncodedNetwork> last;
      // Builds stay single-threaded so timings are comparable.
      for (std::size_t r = 0; r < args.rebuilds; ++r) {
        last = build_encoding(ann, kind);
        run.build_seconds.push_back(last->build_seconds());
        run.tighten_seconds.push_back(last->bounds.tighten_seconds);
      }
      run.counts = count_stats(*last);
      run.results = explain_instances(ann, *last, instances, indices, order, args.jobs);
      for (const auto& entry : run.results) {
        if (entry.status == "ok") run.explain_seconds.push_back(entry.explanation.total_seconds);
      }
      run.build = mean_std(run.build_seconds);
      run.tighten = mean_std(run.tighten_seconds);
      run.explain = mean_std(run.explain_seconds);
      run.overall = run.build.mean;
      for (double t : run.explain_seconds) run.overall += t;
      runs.push_back(std::move(run));
    }
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const auto& a = runs[0].results[k];
      const auto& b = runs[1].results[k];
      if (a.status != b.status || a.explanation.kept_features() != b.explanation.kept_features()) {
        problem = "instance " + std::to_string(k) + ": encodings disagree on the kept set";
        code = kExitVerifyFailed;
        break;
      }
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::inconclusive && e.code() != ErrorCode::numerical) throw;
    problem = e.what();
    code = kExitInconclusive;
  }

  if (code == kExitOk) {
    print_bench_table(runs, out);
    const auto& ind = runs[0];
    const auto& bm = runs[1];
    out << "tightening share of build: indicator " << fixed(ind.tighten.mean) << " s, bigm "
        << fixed(bm.tighten.mean) << " s\n";
    out << "build time delta (bigm vs indicator): " << percent_delta(ind.build.mean, bm.build.mean)
        << "\n";
    out << "overall time delta (bigm vs indicator): " << percent_delta(ind.overall, bm.overall)
        << "\n";
    std::size_t rejected = 0;
    for (const auto& entry : ind.results) rejected += entry.status != "ok";
    if (rejected) out << rejected << " instance(s) rejected for tie margin\n";
    out << "kept sets identical across encodings\n";
  } else {
    out << "bench aborted: " << problem << "\n";
  }
  if (!args.out_path.empty()) {
    write_file(args.out_path,
               dump(bench_to_json(runs, args, model, instances.size(), code != kExitOk, problem)));
    out << "wrote " << args.out_path << "\n";
  }
  return code;
}

// ---------------------------------------------------------------------------

inline int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Minimal abductive explanations of ReLU network predictions via MILP", "milpexplain"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("milpexplain 1.0.0"));
  app.footer(
      "Exit codes: 0 success, 1 verification failure, 2 input/schema error, 3 I/O or parse error, "
      "4 solver inconclusive.");

  const std::map<std::string, EncodingKind> encodings = {
      {"indicator", EncodingKind::indicator}, {"bigm", EncodingKind::big_m}};

  std::string model_path;
  std::string dataset_path;
  std::string out_path;
  EncodingKind kind = EncodingKind::indicator;

  auto* validate = app.add_subcommand("validate", "Load and check a model file");
  validate->add_option("model", model_path, "model file")->required();

  auto* bounds = app.add_subcommand("bounds", "Tighten and cache neuron bounds");
  bounds->add_option("model", model_path, "model file")->required();
  bounds->add_option("--encoding", kind, "indicator or bigm")
      ->required()
      ->transform(CLI::CheckedTransformer(encodings).description(""))->option_text("indicator|bigm [indicator]");
  bounds->add_option("--out", out_path, "bounds cache file (reused when it matches)")->required();

  EncodeArgs encode_args;
  std::size_t instance_index = 0;
  auto* encode_cmd = app.add_subcommand("encode", "Write the MILP encoding as an LP file");
  encode_cmd->add_option("model", model_path, "model file")->required();
  encode_cmd->add_option("--encoding", kind, "indicator or bigm")
      ->required()
      ->transform(CLI::CheckedTransformer(encodings).description(""))->option_text("indicator|bigm [indicator]");
  auto* index_opt =
      encode_cmd->add_option("--instance-index", instance_index, "row to fix the inputs to");
  encode_cmd->add_option("--dataset", dataset_path, "CSV instances");
  encode_cmd->add_flag("--negate", encode_args.negate, "add the negated prediction");
  encode_cmd->add_option("--bounds", encode_args.bounds_path, "reuse a bounds cache");
  encode_cmd->add_option("--out", out_path, "LP file")->required();

  ExplainArgs explain_args;
  auto* explain = app.add_subcommand("explain", "Compute minimal explanations for a dataset");
  explain->add_option("model", model_path, "model file")->required();
  explain->add_option("dataset", dataset_path, "CSV instances")->required();
  explain->add_option("--encoding", kind, "indicator or bigm")
      ->transform(CLI::CheckedTransformer(encodings).description(""))->option_text("indicator|bigm [indicator]")
      ->default_str("indicator");
  explain->add_option("--order", explain_args.order,
                      "natural, reverse, seed:N, or seed (MILPEXPLAIN_SEED, default 0)")
      ->default_str("natural");
  explain->add_option("--out", out_path, "report file")->required();
  explain->add_option("--index", explain_args.indices, "explain only these rows");
  explain->add_option("--jobs", explain_args.jobs, "instances explained in parallel")
      ->default_str("1")
      ->check(CLI::PositiveNumber);
  explain->add_option("--bounds", explain_args.bounds_path, "reuse a bounds cache");
  explain->add_flag("--zero-timings", explain_args.zero_timings, "write 0 for every timing field");

  VerifyArgs verify_args;
  std::string verify_encoding;
  auto* verify = app.add_subcommand("verify", "Re-check a report against a fresh encoding");
  verify->add_option("model", model_path, "model file")->required();
  verify->add_option("dataset", dataset_path, "CSV instances")->required();
  verify->add_option("report", verify_args.report_path, "report from explain")->required();
  verify->add_option("--encoding", verify_encoding, "indicator or bigm (default: the report's)")
      ->check(CLI::IsMember({"indicator", "bigm"}));

  BenchArgs bench_args;
  auto* bench = app.add_subcommand(
      "bench",
      "Compare both encodings: R rebuilds each, then every instance explained. "
      "Reports mean ± population standard deviation.");
  bench->add_option("model", model_path, "model file")->required();
  bench->add_option("dataset", dataset_path, "CSV instances")->required();
  bench->add_option("--rebuilds", bench_args.rebuilds, "builds per encoding")
      ->default_str("10")
      ->check(CLI::PositiveNumber);
  bench->add_option("--order", bench_args.order, "feature order")->default_str("natural");
  bench->add_option("--jobs", bench_args.jobs, "instances explained in parallel")
      ->default_str("1")
      ->check(CLI::PositiveNumber);
  bench->add_option("--out", out_path, "structured report file");

  std::vector<std::string> reversed(argv.rbegin(), argv.rend() - (argv.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << e.what() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (validate->parsed()) return cmd_validate(model_path, out);
    if (bounds->parsed()) return cmd_bounds(model_path, kind, out_path, out);
    if (encode_cmd->parsed()) {
      encode_args.model_path = model_path;
      encode_args.kind = kind;
      if (index_opt->count()) encode_args.instance_index = instance_index;
      encode_args.dataset_path = dataset_path;
      encode_args.out_path = out_path;
      return cmd_encode(encode_args, out);
    }
    if (explain->parsed()) {
      explain_args.model_path = model_path;
      explain_args.dataset_path = dataset_path;
      explain_args.kind = kind;
      explain_args.out_path = out_path;
      return cmd_explain(explain_args, out);
    }
    if (verify->parsed()) {
      verify_args.model_path = model_path;
      verify_args.dataset_path = dataset_path;
      if (!verify_encoding.empty()) verify_args.kind = parse_encoding_kind(verify_encoding);
      return cmd_verify(verify_args, out);
    }
    if (bench->parsed()) {
      bench_args.model_path = model_path;
      bench_args.dataset_path = dataset_path;
      bench_args.out_path = out_path;
      return cmd_bench(bench_args, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

inline int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  return run_cli(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace milpexplain::cli
