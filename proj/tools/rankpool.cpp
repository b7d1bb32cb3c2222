// rankpool: encode, train, predict, eval, gradcheck, synth and bench.

#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "rankpool/commands.hpp"

namespace {

using namespace rankpool;
using namespace rankpool::cli;

/// `path` or stdout for "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path == "-" || path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw InvalidInput("cannot write '" + path + "'");
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

Dataset load_dataset(const std::string& path, bool from_dir) {
  if (from_dir) return read_dataset_dir(path);
  if (path == "-") return read_dataset(std::cin);
  return read_dataset_file(path);
}

void add_svr_flags(CLI::App* app, double& c, double& eps) {
  app->add_option("--svr-c", c, "SVR constant C")->capture_default_str()->check(CLI::PositiveNumber);
  app->add_option("--svr-eps", eps, "SVR epsilon")->capture_default_str()->check(CLI::NonNegativeNumber);
}

template <class E>
CLI::Option* add_enum(CLI::App* app, const std::string& name, E& target, E (*parse)(std::string_view),
                      const std::string& help) {
  return app->add_option_function<std::string>(name, [&target, parse](const std::string& s) { target = parse(s); }, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal sequence encoding with rank pooling and hierarchical rank pooling"};
  app.require_subcommand(1);

  // encode
  EncodeOptions enc;
  std::string enc_in, enc_out = "-";
  bool enc_dir = false, enc_binary = false;
  auto* encode = app.add_subcommand("encode", "Encode every sequence of a dataset");
  encode->add_option("input", enc_in, "Dataset file (JSON lines), or a directory with --from-dir")->required();
  encode->add_option("-o,--output", enc_out, "Output file ('-' for stdout)");
  encode->add_flag("--from-dir", enc_dir, "Read one delimited matrix per file from a directory");
  add_enum(encode, "--method", enc.method, parse_method, "avg|max|pyramid|pyramid-max|rank|recursive-rank|hrp (default hrp)");
  encode->add_option("--window", enc.window, "Window size per layer")->capture_default_str()->check(CLI::PositiveNumber);
  encode->add_option("--stride", enc.stride, "Stride per layer")->capture_default_str()->check(CLI::PositiveNumber);
  encode->add_option("--depth", enc.depth, "Hierarchy depth")->capture_default_str()->check(CLI::PositiveNumber);
  add_enum(encode, "--map", enc.map, parse_map_kind, "ser|ssr|relu|identity|l2norm (default ser)");
  encode->add_flag("!--no-final-map", enc.final_map, "Do not apply the map before the final pool");
  add_svr_flags(encode, enc.svr_c, enc.svr_eps);
  encode->add_flag("--smooth-tvm", enc.smooth_tvm, "Replace frames by their running mean first");
  encode->add_flag("--l2norm", enc.l2norm, "L2-normalize input frames");
  encode->add_flag("--binary", enc_binary, "Write the bit-exact binary encoding format");
  encode->add_option("--jobs", enc.jobs, "Worker threads (default: RANKPOOL_JOBS or all cores)");

  // train
  TrainOptions tr;
  std::string tr_in, tr_model;
  auto* train = app.add_subcommand("train", "Train a classifier (and W / upstream map)");
  train->add_option("input", tr_in, "Encodings (linear) or dataset (discriminative, end2end)")->required();
  train->add_option("-o,--model", tr_model, "Model output file")->required();
  add_enum(train, "--mode", tr.mode, parse_train_mode, "linear|discriminative|end2end (default linear)");
  add_enum(train, "--loss", tr.loss, parse_loss_kind, "cross-entropy|hinge (default cross-entropy)");
  train->add_option("--epochs", tr.epochs)->capture_default_str();
  train->add_option("--lr-start", tr.lr_start, "Default 1e-3 (0.01 for end2end)");
  train->add_option("--lr-end", tr.lr_end, "Default 1e-5 (1e-4 for end2end)");
  train->add_option("--momentum", tr.momentum)->capture_default_str();
  train->add_option("--weight-decay", tr.weight_decay)->capture_default_str();
  train->add_option("--seed", tr.seed)->capture_default_str();
  train->add_flag("--normalize", tr.normalize, "L2-normalize encodings inside the classifier");
  add_enum(train, "--map", tr.map, parse_map_kind, "Non-linearity after W / the affine upstream (default relu)");
  add_enum(train, "--grad-mode", tr.grad_mode, parse_wgrad_mode, "full|diagonal (discriminative)");
  train->add_option("--init-epochs", tr.init_epochs, "Head pre-training epochs (discriminative)")->capture_default_str();
  add_svr_flags(train, tr.svr_c, tr.svr_eps);

  // predict / eval share inputs
  std::string pe_model, pe_in, pe_out = "-";
  bool pe_dir = false, pe_kv = false;
  std::size_t pe_jobs = 0;
  auto* predict = app.add_subcommand("predict", "Score sequences or encodings with a model");
  auto* eval = app.add_subcommand("eval", "Accuracy, per-class accuracy and mAP of a model");
  for (auto* sub : {predict, eval}) {
    sub->add_option("model", pe_model, "Model file")->required();
    sub->add_option("input", pe_in, "Encodings (precomputed models) or dataset")->required();
    sub->add_flag("--from-dir", pe_dir, "Dataset is a directory of matrices");
    sub->add_option("--jobs", pe_jobs, "Worker threads");
  }
  predict->add_option("-o,--output", pe_out, "Output file ('-' for stdout)");
  eval->add_flag("--kv", pe_kv, "Machine-readable key=value output");

  // gradcheck
  std::vector<std::string> gc_suites{"svr", "theta", "inputs", "W", "pipeline"};
  std::size_t gc_trials = 20;
  std::uint64_t gc_seed = 1;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of the argmin gradients");
  gradcheck->add_option("--suite", gc_suites, "svr|theta|inputs|W|pipeline (repeatable; default all)");
  gradcheck->add_option("--trials", gc_trials)->capture_default_str();
  gradcheck->add_option("--seed", gc_seed)->capture_default_str();

  // synth
  SynthSpec sy;
  std::string sy_out = "-";
  std::optional<std::size_t> sy_len;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_enum(synth, "--kind", sy.kind, parse_synth_kind, "order-classes|latent-ramp|noise");
  synth->add_option("--k", sy.classes, "Classes")->capture_default_str();
  synth->add_option("--n", sy.count, "Sequences")->capture_default_str();
  synth->add_option("--length", sy_len, "Fixed sequence length (sets min and max)");
  synth->add_option("--min-length", sy.min_length)->capture_default_str();
  synth->add_option("--max-length", sy.max_length)->capture_default_str();
  synth->add_option("--dim", sy.dim)->capture_default_str();
  synth->add_option("--noise", sy.noise)->capture_default_str();
  synth->add_option("--seed", sy.seed)->capture_default_str();
  synth->add_option("-o,--output", sy_out, "Output file ('-' for stdout)");

  // bench
  SynthSpec bs;
  bs.count = 50;
  EncodeOptions be;
  auto* bench = app.add_subcommand("bench", "Time every encoder on synthetic data");
  bench->add_option("--n", bs.count)->capture_default_str();
  bench->add_option("--length", bs.min_length)->capture_default_str();
  bench->add_option("--dim", bs.dim)->capture_default_str();
  bench->add_option("--jobs", be.jobs);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  } catch (const std::exception& e) {
    return report_error(e, std::cerr);
  }

  try {
    if (*encode) {
      Output out(enc_out);
      return cmd_encode(load_dataset(enc_in, enc_dir), enc, enc_binary, out.stream(), std::cerr);
    }
    if (*train) {
      Model m;
      if (tr.mode == TrainMode::Linear) {
        m = train_from_encodings(read_encodings_file(tr_in), tr, std::cerr);
      } else {
        const Dataset ds = read_dataset_file(tr_in);
        if (!check_dataset(ds, std::cerr)) return kInputError;
        m = train_from_dataset(ds, tr, std::cerr);
      }
      save_model_file(tr_model, m);
      std::cout << "train_accuracy=" << detail::format_real(m.train_accuracy, 9) << '\n';
      std::cout << "final_loss=" << detail::format_real(m.loss_trace.back(), 9) << '\n';
      return kOk;
    }
    if (*predict || *eval) {
      const Model m = load_model_file(pe_model);
      Scored s;
      if (m.encoder == EncoderKind::Precomputed) {
        s = score_encodings(m, read_encodings_file(pe_in));
      } else {
        const Dataset ds = load_dataset(pe_in, pe_dir);
        if (!check_dataset(ds, std::cerr)) return kInputError;
        s = score_dataset(m, ds, pe_jobs);
      }
      if (*predict) {
        Output out(pe_out);
        print_predictions(out.stream(), s, m);
      } else {
        print_metrics(std::cout, compute_metrics(s, m.classes()), m, pe_kv);
      }
      return kOk;
    }
    if (*gradcheck) {
      std::vector<GradSuite> suites;
      for (const auto& s : gc_suites) suites.push_back(parse_grad_suite(s));
      return cmd_gradcheck(suites, gc_trials, gc_seed, std::cout, std::cerr);
    }
    if (*synth) {
      if (sy_len) sy.min_length = sy.max_length = *sy_len;
      const Dataset ds = generate(sy);
      Output out(sy_out);
      write_dataset(out.stream(), ds);
      return kOk;
    }
    if (*bench) {
      bs.max_length = bs.min_length;
      return cmd_bench(bs, be, std::cout, std::cerr);
    }
  } catch (const std::exception& e) {
    return report_error(e, std::cerr);
  }
  return kOk;
}
