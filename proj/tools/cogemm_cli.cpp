#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cogemm/command_processor.hpp"
#include "cogemm/error.hpp"
#include "cogemm/harness.hpp"
#include "cogemm/io.hpp"
#include "cogemm/predictor.hpp"
#include "cogemm/report.hpp"
#include "cogemm/tuner.hpp"

using namespace cogemm;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_file(out, text);
  }
}

Exec exec_of(bool serial) { return serial ? Exec::Serial : Exec::Parallel; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concurrency-aware GEMM tuning and scheduling on a simulated GPU"};
  app.require_subcommand(1);

  // corpus
  std::string spec_path, corpus_out;
  std::int64_t corpus_seed = -1;
  auto* corpus = app.add_subcommand("corpus", "Generate a GEMM corpus from network templates");
  corpus->add_option("--spec", spec_path, "Corpus spec JSON")->required();
  corpus->add_option("--out", corpus_out, "Output corpus JSON (stdout when omitted)");
  corpus->add_option("--seed", corpus_seed, "Override the spec seed");

  // tune
  std::string tune_corpus, gpu_path = "", space_path, card_path, lib_out;
  double knn_frac = 0.0;
  int knn_k = 3;
  std::uint64_t tune_seed = 7;
  bool tune_serial = false;
  auto* tune = app.add_subcommand("tune", "Build the GO kernel library");
  tune->add_option("--corpus", tune_corpus, "Corpus JSON")->required();
  tune->add_option("--gpu", gpu_path, "GPU profile JSON (built-in profile when omitted)");
  tune->add_option("--space", space_path, "Kernel space bounds JSON");
  tune->add_option("--card", card_path, "Model card JSON");
  tune->add_option("--out", lib_out, "Output library JSON")->required();
  tune->add_option("--knn-frac", knn_frac, "Fraction tuned exhaustively; 0 tunes everything")->check(CLI::Range(0.0, 1.0));
  tune->add_option("--knn-k", knn_k, "Neighbours for the preferred-RC vote");
  tune->add_option("--seed", tune_seed, "Seed for the KNN sample");
  tune->add_flag("--serial", tune_serial, "Run the serial reference path");

  // dataset
  std::string ds_lib, ds_out;
  auto* dataset = app.add_subcommand("dataset", "Profile the library into a labelled CSV dataset");
  dataset->add_option("--lib", ds_lib, "Library JSON")->required();
  dataset->add_option("--out", ds_out, "Output CSV")->required();

  // train
  std::string tr_dataset, tr_out, tr_transform = "log1p", tr_trainer = "softmax";
  TrainParams tp;
  auto* train_cmd = app.add_subcommand("train", "Train the CD predictor");
  train_cmd->add_option("--dataset", tr_dataset, "Dataset CSV")->required();
  train_cmd->add_option("--out", tr_out, "Output model JSON")->required();
  train_cmd->add_option("--seed", tp.seed, "Split and init seed");
  train_cmd->add_option("--lr", tp.lr, "Learning rate");
  train_cmd->add_option("--epochs", tp.epochs, "Full-batch epochs");
  train_cmd->add_option("--l2", tp.l2, "L2 penalty on non-bias weights");
  train_cmd->add_option("--test-frac", tp.test_fraction, "Held-out fraction");
  train_cmd->add_option("--transform", tr_transform, "Feature transform")->check(CLI::IsMember({"none", "log1p"}));
  train_cmd->add_option("--trainer", tr_trainer, "Training objective")->check(CLI::IsMember({"softmax", "ovr"}));

  // run
  std::string run_configs = "all", run_ns = "2,4,8,16", run_lib, run_model, run_corpus, run_out;
  std::uint64_t run_seed = 7;
  bool run_heldout = false, run_serial = false;
  auto* run = app.add_subcommand("run", "Run experiment configurations over the corpus");
  run->add_option("--config", run_configs, "Comma-separated configurations or 'all'");
  run->add_option("--n", run_ns, "Comma-separated independent GEMM counts");
  run->add_option("--lib", run_lib, "Library JSON")->required();
  run->add_option("--model", run_model, "Model JSON (needed by goldyloc)");
  run->add_option("--corpus", run_corpus, "Corpus JSON (library shapes when omitted)");
  run->add_option("--out", run_out, "Output report JSON (stdout when omitted)");
  run->add_option("--seed", run_seed, "Seed recorded in the report");
  int run_repeats = 8;
  run->add_option("--repeats", run_repeats, "Back-to-back copies per queue");
  run->add_flag("--heldout", run_heldout, "Restrict to the model's held-out shapes");
  run->add_flag("--serial", run_serial, "Run the serial reference path");

  // report
  std::string rep_in, rep_format = "md", rep_out;
  auto* report = app.add_subcommand("report", "Render a run report");
  report->add_option("--in", rep_in, "Report JSON")->required();
  report->add_option("--format", rep_format, "md, json or csv");
  report->add_option("--out", rep_out, "Output file (stdout when omitted)");

  // simulate
  std::string sim_trace, sim_lib, sim_policy = "default", sim_model, sim_log;
  auto* simulate = app.add_subcommand("simulate", "Replay a workload trace through the command processor");
  simulate->add_option("--trace", sim_trace, "Trace JSON")->required();
  simulate->add_option("--lib", sim_lib, "Library JSON")->required();
  simulate->add_option("--policy", sim_policy,
                       "sequential, default, go_kernels, goldyloc, oracle, cu_partition or resource_partition");
  simulate->add_option("--model", sim_model, "Model JSON (needed by goldyloc)");
  simulate->add_option("--log", sim_log, "Write the JSON-lines dispatch log here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*corpus) {
      CorpusSpec spec = load_corpus_spec(spec_path);
      if (corpus_seed >= 0) spec.seed = static_cast<std::uint64_t>(corpus_seed);
      const GeneratedCorpus c = generate_corpus(spec);
      emit(corpus_out, corpus_to_json(c.items).dump(2) + "\n");
      std::cerr << c.items.size() << " corpus items, " << c.dropped << " template shapes out of range\n";
    } else if (*tune) {
      const auto items = load_corpus(tune_corpus);
      const GpuResources gpu = gpu_path.empty() ? default_gpu() : load_gpu(gpu_path);
      const SpaceBounds bounds = space_path.empty() ? SpaceBounds{} : load_space_bounds(space_path);
      const ModelCard card = card_path.empty() ? ModelCard{} : load_model_card(card_path);
      const auto kernels = enumerate_kernels(bounds, gpu);
      const GoLibrary lib =
          knn_frac > 0 ? build_knn_library(items, gpu, kernels, card, KnnOptions{knn_frac, knn_k, tune_seed}, exec_of(tune_serial))
                       : build_go_library(items, gpu, kernels, card, exec_of(tune_serial));
      write_json_file(lib_out, nlohmann::json(lib));
      std::cerr << lib.size() << " shapes tuned over " << kernels.size() << " kernels\n";
    } else if (*dataset) {
      const GoLibrary lib = load_library(ds_lib);
      const auto records = build_dataset(lib);
      write_file(ds_out, dataset_to_csv(records));
      std::cerr << records.size() << " records\n";
    } else if (*train_cmd) {
      tp.transform = tr_transform == "log1p" ? FeatureTransform::Log1p : FeatureTransform::None;
      tp.trainer = tr_trainer == "ovr" ? Trainer::OneVsRest : Trainer::Softmax;
      const auto records = dataset_from_csv(read_file(tr_dataset));
      const TrainResult r = train(records, tp);
      write_json_file(tr_out, model_to_json(r, tp));
      std::fprintf(stderr, "train accuracy %.4f, held-out accuracy %.4f\n", r.train_accuracy, r.test_accuracy);
    } else if (*run) {
      const GoLibrary lib = load_library(run_lib);
      const auto items = run_corpus.empty() ? library_corpus(lib) : load_corpus(run_corpus);
      std::vector<ConfigName> configs;
      if (run_configs == "all") {
        configs.assign(kAllConfigs.begin(), kAllConfigs.end());
      } else {
        for (const auto& c : split_list(run_configs)) configs.push_back(config_from_string(c));
      }
      std::vector<int> ns;
      for (const auto& n : split_list(run_ns)) {
        try {
          ns.push_back(std::stoi(n));
        } catch (const std::exception&) {
          throw ValidationError("bad --n value '" + n + "'");
        }
      }
      std::optional<CdPredictor> model;
      RunOptions opts;
      opts.exec = exec_of(run_serial);
      opts.repeats = run_repeats;
      if (!run_model.empty()) {
        const auto j = read_json_file(run_model);
        model = model_from_json(j);
        if (run_heldout) opts.only_keys = model_test_keys(j);
      } else if (run_heldout) {
        throw ConfigurationError("--heldout needs --model");
      }
      const bool needs_model = std::find(configs.begin(), configs.end(), ConfigName::Goldyloc) != configs.end();
      if (needs_model && !model) throw ConfigurationError("goldyloc needs --model");
      const RunReport r = run_experiments(configs, ns, run_seed, items, lib, model ? &*model : nullptr, opts);
      emit(run_out, emit_report(r, ReportFormat::Json));
    } else if (*report) {
      const RunReport r = parse_report_json(read_file(rep_in));
      emit(rep_out, emit_report(r, report_format_from_string(rep_format)));
    } else if (*simulate) {
      const GoLibrary lib = load_library(sim_lib);
      const Trace trace = load_trace(sim_trace);
      std::unique_ptr<CdChooser> chooser;
      TimelineOptions opts;
      TimelineResult r;
      if (sim_policy == "oracle") {
        r = oracle_timeline(trace, lib, opts.timing).timeline;
      } else {
        if (sim_policy == "goldyloc") {
          if (sim_model.empty()) throw ConfigurationError("goldyloc needs --model");
          chooser = std::make_unique<ModelChooser>(model_from_json(read_json_file(sim_model)));
          opts.policy = Policy::Dynamic;
        } else {
          opts.policy = policy_from_string(sim_policy);
        }
        opts.chooser = chooser.get();
        r = timeline(trace, lib, opts);
      }
      if (!sim_log.empty()) write_file(sim_log, dispatch_log_jsonl(r));
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << nlohmann::json{{"end_to_end_s", r.end_to_end_s()},
                                  {"end_to_end_ps", r.end_to_end_ps},
                                  {"exposed_overhead_ps", r.exposed_overhead_ps},
                                  {"batches", r.batches.size()},
                                  {"decisions", r.decisions}}
                       .dump(2)
                << '\n';
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
