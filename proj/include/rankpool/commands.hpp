#pragma once

// Command implementations behind the `rankpool` executable. Each command
// writes its primary output to `out`, progress and diagnostics to `err`,
// and returns the process exit code:
//   0 ok, 1 check failed, 2 input error, 3 numerical failure.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rankpool/gradcheck.hpp"
#include "rankpool/hierarchy.hpp"
#include "rankpool/io.hpp"
#include "rankpool/metrics.hpp"
#include "rankpool/pooling.hpp"
#include "rankpool/synth_oracle.hpp"
#include "rankpool/training.hpp"

namespace rankpool::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kInputError = 2, kNumericError = 3 };

/// Map a library exception to the exit-code contract and report it.
inline int report_error(const std::exception& e, std::ostream& err) {
  err << "error: " << e.what() << '\n';
  if (dynamic_cast<const InvalidInput*>(&e) || dynamic_cast<const DegenerateLabels*>(&e) ||
      dynamic_cast<const PrefixTooShort*>(&e))
    return kInputError;
  if (dynamic_cast<const SolverDidNotConverge*>(&e) || dynamic_cast<const NotConverged*>(&e) ||
      dynamic_cast<const DegenerateUpdate*>(&e) || dynamic_cast<const SingularMatrix*>(&e))
    return kNumericError;
  return kInputError;
}

/// Worker count: explicit value, else RANKPOOL_JOBS, else hardware threads.
inline std::size_t resolve_jobs(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RANKPOOL_JOBS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Run fn(i) for i in [0, n) on `jobs` threads. If any call throws, the
/// exception of the lowest index is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  jobs = std::min(jobs, std::max<std::size_t>(n, 1));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// encode
// ---------------------------------------------------------------------------

enum class Method { Avg, Max, Pyramid, PyramidMax, Rank, RecursiveRank, Hrp };

inline std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::Avg: return "avg";
    case Method::Max: return "max";
    case Method::Pyramid: return "pyramid";
    case Method::PyramidMax: return "pyramid-max";
    case Method::Rank: return "rank";
    case Method::RecursiveRank: return "recursive-rank";
    case Method::Hrp: return "hrp";
  }
  return "avg";
}

inline Method parse_method(std::string_view s) {
  for (auto m : {Method::Avg, Method::Max, Method::Pyramid, Method::PyramidMax, Method::Rank, Method::RecursiveRank,
                 Method::Hrp})
    if (to_string(m) == s) return m;
  throw InvalidInput("unknown encoding method '" + std::string(s) + "'");
}

struct EncodeOptions {
  Method method = Method::Hrp;
  std::size_t window = 20;
  std::size_t stride = 1;
  std::size_t depth = 2;
  MapKind map = MapKind::Ser;
  bool final_map = true;   // apply `map` before the last (whole-sequence) pool too
  double svr_c = 1.0;
  double svr_eps = 0.1;
  bool smooth_tvm = false;
  bool l2norm = false;
  std::size_t jobs = 0;

  SvrConfig svr() const {
    SvrConfig c;
    c.C = svr_c;
    c.epsilon = svr_eps;
    return c;
  }

  HierarchyConfig hierarchy() const {
    auto h = HierarchyConfig::uniform(depth, window, stride, map, svr());
    if (!final_map) h.maps.back() = MapKind::Identity;
    return h;
  }

  /// Configuration echo; excludes settings that cannot change the output.
  nlohmann::json echo() const {
    nlohmann::json j;
    j["method"] = std::string(to_string(method));
    j["window"] = window;
    j["stride"] = stride;
    j["depth"] = depth;
    j["map"] = std::string(rankpool::to_string(map));
    j["final_map"] = final_map;
    j["svr_c"] = svr_c;
    j["svr_eps"] = svr_eps;
    j["smooth_tvm"] = smooth_tvm;
    j["l2norm"] = l2norm;
    return j;
  }
};

/// Encode a single sequence with the configured method.
inline Vector encode_sequence(const FrameSequence& raw, const EncodeOptions& opt) {
  FrameSequence x = opt.smooth_tvm ? tvm_smooth(raw) : raw;
  if (opt.l2norm) x = apply_map(x, MapKind::L2Norm);
  switch (opt.method) {
    case Method::Avg: return avg_pool(x).values;
    case Method::Max: return max_pool(x).values;
    case Method::Pyramid: return temporal_pyramid(x, PoolBase::Avg).values;
    case Method::PyramidMax: return temporal_pyramid(x, PoolBase::Max).values;
    case Method::Rank: return rank_pool(apply_map(x, opt.final_map ? opt.map : MapKind::Identity), opt.svr()).u.values;
    case Method::RecursiveRank: {
      const auto layer = recursive_rank_pool(x, opt.map, opt.svr()).matrix();
      return rank_pool(apply_map_rows(layer, opt.final_map ? opt.map : MapKind::Identity), opt.svr()).u.values;
    }
    case Method::Hrp: return hrp_encode(x, opt.hierarchy()).values;
  }
  return {};
}

/// Encode every sequence; row order follows the dataset regardless of `jobs`.
inline EncodingTable encode_dataset(const Dataset& ds, const EncodeOptions& opt) {
  EncodingTable t;
  t.class_names = ds.class_names;
  t.meta = opt.echo();
  t.rows.resize(ds.size());
  parallel_for(ds.size(), resolve_jobs(opt.jobs), [&](std::size_t i) {
    try {
      t.rows[i] = encode_sequence(ds.sequences[i], opt);
    } catch (const SolverDidNotConverge& e) {
      throw e.with_context("sequence '" + ds.sequences[i].id + "'");
    }
  });
  for (const auto& s : ds.sequences) {
    t.ids.push_back(s.id);
    t.labels.push_back(s.label);
  }
  return t;
}

/// Validation report on `err`; true when clean.
inline bool check_dataset(const Dataset& ds, std::ostream& err) {
  const auto violations = validate_dataset(ds);
  for (const auto& v : violations) err << "invalid: sequence '" << v.id << "': " << v.rule << '\n';
  return violations.empty();
}

inline bool uniform_dimension(const Dataset& ds) {
  for (const auto& s : ds.sequences)
    if (s.dim() != ds.sequences.front().dim()) return false;
  return true;
}

inline int cmd_encode(const Dataset& ds, const EncodeOptions& opt, bool binary, std::ostream& out, std::ostream& err) {
  try {
    if (!check_dataset(ds, err)) return kInputError;
    if (opt.method != Method::Avg && opt.method != Method::Max && opt.method != Method::Pyramid &&
        opt.method != Method::PyramidMax && !uniform_dimension(ds)) {
      err << "invalid: rank-based encoders need one frame dimension across the dataset\n";
      return kInputError;
    }
    if (opt.method == Method::Hrp) opt.hierarchy().validate();
    const auto table = encode_dataset(ds, opt);
    if (binary)
      write_encodings_binary(out, table);
    else
      write_encodings(out, table);
    return kOk;
  } catch (const std::exception& e) {
    return report_error(e, err);
  }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

enum class TrainMode { Linear, Discriminative, EndToEnd };

inline TrainMode parse_train_mode(std::string_view s) {
  if (s == "linear") return TrainMode::Linear;
  if (s == "discriminative") return TrainMode::Discriminative;
  if (s == "end2end") return TrainMode::EndToEnd;
  throw InvalidInput("unknown training mode '" + std::string(s) + "'");
}

struct TrainOptions {
  TrainMode mode = TrainMode::Linear;
  LossKind loss = LossKind::CrossEntropy;
  std::size_t epochs = 30;
  std::optional<double> lr_start;   // default depends on mode
  std::optional<double> lr_end;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::uint64_t seed = 0;
  bool normalize = false;
  MapKind map = MapKind::Relu;          // discriminative psi / end2end activation
  WGradMode grad_mode = WGradMode::Full;
  double svr_c = 1.0;
  double svr_eps = 0.1;
  std::size_t init_epochs = 30;     // discriminative head pre-training

  SgdConfig sgd() const {
    SgdConfig c = mode == TrainMode::EndToEnd ? SgdConfig::end_to_end_defaults() : SgdConfig{};
    c.epochs = epochs;
    if (lr_start) c.lr_start = *lr_start;
    if (lr_end) c.lr_end = *lr_end;
    c.momentum = momentum;
    c.weight_decay = weight_decay;
    c.seed = seed;
    return c;
  }

  SvrConfig svr() const {
    SvrConfig c;
    c.C = svr_c;
    c.epsilon = svr_eps;
    return c;
  }
};

inline void echo_train_options(Model& m, const TrainOptions& opt) {
  const auto sgd = opt.sgd();
  m.meta["epochs"] = std::to_string(sgd.epochs);
  m.meta["lr_start"] = detail::format_real(sgd.lr_start, 17);
  m.meta["lr_end"] = detail::format_real(sgd.lr_end, 17);
  m.meta["momentum"] = detail::format_real(sgd.momentum, 17);
  m.meta["weight_decay"] = detail::format_real(sgd.weight_decay, 17);
  m.meta["seed"] = std::to_string(sgd.seed);
  if (opt.mode == TrainMode::Discriminative) {
    m.meta["grad_mode"] = std::string(to_string(opt.grad_mode));
    m.meta["init_epochs"] = std::to_string(opt.init_epochs);
  }
}

/// Train on precomputed encodings (linear mode).
inline Model train_from_encodings(const EncodingTable& t, const TrainOptions& opt, std::ostream& err) {
  std::vector<int> y;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!t.labels[i]) throw DegenerateLabels("encoding row '" + t.ids[i] + "' has no label");
    y.push_back(*t.labels[i]);
  }
  Model m = train_linear_classifier(t.rows, y, t.class_names.size(), opt.loss, opt.sgd(), opt.normalize,
                                    [&](std::size_t e, double l) { err << "epoch " << e << " loss " << l << '\n'; });
  m.class_names = t.class_names;
  echo_train_options(m, opt);
  for (auto it = t.meta.begin(); it != t.meta.end(); ++it) m.meta["encoder." + it.key()] = it.value().dump();
  return m;
}

/// Train on a raw dataset (discriminative or end2end mode).
inline Model train_from_dataset(const Dataset& ds, const TrainOptions& opt, std::ostream& err) {
  auto log = [&](std::size_t e, double l) { err << "epoch " << e << " loss " << l << '\n'; };
  Model m;
  if (opt.mode == TrainMode::Discriminative) {
    DiscriminativeOptions o;
    o.map = opt.map;
    o.grad_mode = opt.grad_mode;
    o.loss = opt.loss;
    o.normalize = opt.normalize;
    o.svr = opt.svr();
    o.sgd = opt.sgd();
    o.init_sgd = opt.sgd();
    o.init_sgd.epochs = opt.init_epochs;
    m = train_discriminative_rp(ds, o, log);
  } else {
    EndToEndOptions o;
    o.loss = opt.loss;
    o.normalize = opt.normalize;
    o.svr = opt.svr();
    o.sgd = opt.sgd();
    AffineUpstream up = AffineUpstream::identity_init(ds.sequences.front().dim(), opt.map);
    m = train_end_to_end(ds, up, o, log);
  }
  echo_train_options(m, opt);
  return m;
}

// ---------------------------------------------------------------------------
// predict / eval
// ---------------------------------------------------------------------------

/// Scores plus true labels re-indexed into the model's class table.
struct Scored {
  std::vector<std::string> ids;
  std::vector<Vector> scores;
  std::vector<int> predicted;
  std::vector<std::optional<int>> truth;
};

inline std::optional<int> remap_label(const std::optional<int>& y, const std::vector<std::string>& from,
                                      const Model& m) {
  if (!y) return std::nullopt;
  if (*y < 0 || static_cast<std::size_t>(*y) >= from.size()) throw InvalidInput("label outside the class table");
  const int c = detail::class_index(m.class_names, from[static_cast<std::size_t>(*y)]);
  if (c < 0) throw InvalidInput("class '" + from[static_cast<std::size_t>(*y)] + "' is unknown to the model");
  return c;
}

inline Scored score_encodings(const Model& m, const EncodingTable& t) {
  if (t.dim() != m.head.dim()) throw InvalidInput("encoding dimension does not match the model");
  Scored s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    s.ids.push_back(t.ids[i]);
    s.scores.push_back(m.head.scores(t.rows[i]));
    s.predicted.push_back(argmax(s.scores.back()));
    s.truth.push_back(remap_label(t.labels[i], t.class_names, m));
  }
  return s;
}

inline Scored score_dataset(const Model& m, const Dataset& ds, std::size_t jobs) {
  Scored s;
  s.scores.resize(ds.size());
  parallel_for(ds.size(), resolve_jobs(jobs), [&](std::size_t i) { s.scores[i] = m.head.scores(m.encode(ds.sequences[i])); });
  for (std::size_t i = 0; i < ds.size(); ++i) {
    s.ids.push_back(ds.sequences[i].id);
    s.predicted.push_back(argmax(s.scores[i]));
    s.truth.push_back(remap_label(ds.sequences[i].label, ds.class_names, m));
  }
  return s;
}

struct Metrics {
  double accuracy = 0.0;
  std::vector<double> per_class;
  double mean_ap = 0.0;
  std::size_t count = 0;
};

inline Metrics compute_metrics(const Scored& s, std::size_t k) {
  std::vector<int> pred, truth;
  std::vector<Vector> scores;
  for (std::size_t i = 0; i < s.truth.size(); ++i) {
    if (!s.truth[i]) continue;
    pred.push_back(s.predicted[i]);
    truth.push_back(*s.truth[i]);
    scores.push_back(s.scores[i]);
  }
  if (truth.empty()) throw InvalidInput("no labelled items to evaluate");
  Metrics m;
  m.count = truth.size();
  m.accuracy = accuracy(pred, truth);
  m.per_class = per_class_accuracy(pred, truth, k);
  m.mean_ap = mean_average_precision(scores, truth, k);
  return m;
}

inline void print_metrics(std::ostream& out, const Metrics& m, const Model& model, bool kv) {
  auto fmt = [](double v) { return detail::format_real(v, 9); };
  if (kv) {
    out << "count=" << m.count << '\n' << "accuracy=" << fmt(m.accuracy) << '\n' << "mAP=" << fmt(m.mean_ap) << '\n';
    for (std::size_t c = 0; c < m.per_class.size(); ++c)
      out << "class_accuracy." << model.class_names[c] << '=' << fmt(m.per_class[c]) << '\n';
    return;
  }
  out << "items:     " << m.count << '\n';
  out << "accuracy:  " << fmt(m.accuracy) << '\n';
  out << "mAP:       " << fmt(m.mean_ap) << '\n';
  for (std::size_t c = 0; c < m.per_class.size(); ++c)
    out << "  " << model.class_names[c] << ": " << fmt(m.per_class[c]) << '\n';
}

inline void print_predictions(std::ostream& out, const Scored& s, const Model& m) {
  out << "id,predicted";
  for (const auto& c : m.class_names) out << ",score_" << detail::csv_field(c);
  out << '\n';
  for (std::size_t i = 0; i < s.ids.size(); ++i) {
    out << detail::csv_field(s.ids[i]) << ',' << detail::csv_field(m.class_names[static_cast<std::size_t>(s.predicted[i])]);
    for (Eigen::Index c = 0; c < s.scores[i].size(); ++c) out << ',' << detail::format_real(s.scores[i][c], 9);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

inline int cmd_gradcheck(const std::vector<GradSuite>& suites, std::size_t trials, std::uint64_t seed,
                         std::ostream& out, std::ostream& err) {
  if (trials == 0) {
    err << "warning: --trials 0 checks nothing; passing vacuously\n";
    for (auto s : suites) out << to_string(s) << ": PASS (0 trials)\n";
    return kOk;
  }
  bool ok = true;
  for (auto s : suites) {
    const auto rep = run_gradcheck(s, trials, seed);
    out << to_string(s) << ": " << (rep.passed() ? "PASS" : "FAIL") << " max_rel_err=" << detail::format_real(rep.max_rel_err, 3)
        << " threshold=" << detail::format_real(rep.threshold, 3) << " checked=" << rep.checked
        << " skipped=" << rep.skipped << '\n';
    if (s == GradSuite::W) {
      out << "  D=1 full vs diagonal max |gap|=" << detail::format_real(rep.d1_mode_gap, 3)
          << (rep.d1_mode_gap <= 1e-10 ? " (agree)" : " (DIFFER)") << '\n';
      out << "  mean cosine(diagonal, full)=" << detail::format_real(rep.diag_full_cosine, 4) << '\n';
    }
    ok = ok && rep.passed();
  }
  return ok ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

/// Wall-clock per-sequence encoding time for every method.
inline int cmd_bench(const SynthSpec& spec, const EncodeOptions& base, std::ostream& out, std::ostream& err) {
  try {
    const Dataset ds = generate(spec);
    out << "method,sequences,ms_per_sequence\n";
    for (auto m : {Method::Avg, Method::Max, Method::Pyramid, Method::Rank, Method::RecursiveRank, Method::Hrp}) {
      EncodeOptions opt = base;
      opt.method = m;
      const auto t0 = std::chrono::steady_clock::now();
      encode_dataset(ds, opt);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      out << to_string(m) << ',' << ds.size() << ',' << detail::format_real(ms / static_cast<double>(ds.size()), 4) << '\n';
    }
    return kOk;
  } catch (const std::exception& e) {
    return report_error(e, err);
  }
}

}  // namespace rankpool::cli
