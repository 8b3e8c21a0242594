// protocorrect: synthetic data, initial prototypes, the correction
// protocol and the interactive service from one binary.

#include <csignal>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "protocorrect/clustering.hpp"
#include "protocorrect/dataset.hpp"
#include "protocorrect/protocol.hpp"
#include "protocorrect/service.hpp"

// httplib pulls in <resolv.h>, whose `_res` macro breaks Eigen if it comes first
#include "CLI11.hpp"
#include "httplib.h"

namespace pc = protocorrect;

namespace {

std::optional<std::size_t> parse_budget(const std::string& text) {
  if (text.empty() || text == "unlimited") return std::nullopt;
  std::size_t used = 0;
  const long long v = std::stoll(text, &used);
  if (used != text.size() || v < 1) {
    throw pc::Error(pc::ErrorKind::InvalidConfig, "budget must be a positive integer or 'unlimited'");
  }
  return static_cast<std::size_t>(v);
}

// Dataset files may hold several splits; each subcommand reads one.
pc::EmbeddingDataset load_split(const std::string& base, pc::Split split) {
  auto all = pc::read_embeddings(base);
  auto part = all.subset(split);
  if (part.empty()) {
    throw pc::Error(pc::ErrorKind::EmptyDataset,
                    "no '" + std::string(pc::to_string(split)) + "' records in " + base);
  }
  if (all.rescaled_on_ingest) std::cerr << "note: rows in " << base << " were L2-normalized on ingest\n";
  return part;
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototype-based continual few-shot error correction over embeddings"};
  app.set_config("--config", "", "TOML/INI file with the same option names; command-line values win");
  app.require_subcommand(1);

  // synth
  pc::SyntheticConfig synth_cfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic embedding dataset");
  synth->add_option("--classes", synth_cfg.classes)->capture_default_str();
  synth->add_option("--dim", synth_cfg.dim)->capture_default_str();
  synth->add_option("--per-class-train", synth_cfg.per_class_train)->capture_default_str();
  synth->add_option("--per-class-val", synth_cfg.per_class_val)->capture_default_str();
  synth->add_option("--per-class-test", synth_cfg.per_class_test)->capture_default_str();
  synth->add_option("--sigma", synth_cfg.sigma)->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed)->capture_default_str();
  synth->add_option("--min-separation", synth_cfg.min_mean_separation)->capture_default_str();
  synth->add_option("--out", synth_out, "Output path base (.pemb/.meta.jsonl appended)")->required();

  // build-prototypes
  std::string build_train, build_out, build_budget = "unlimited";
  pc::KMeansConfig build_kmeans;
  bool build_protect = false;
  auto* build = app.add_subcommand("build-prototypes", "Cluster training embeddings into an initial store");
  build->add_option("--train", build_train, "Dataset path base (train split is used)")->required();
  build->add_option("--k", build_kmeans.k)->capture_default_str();
  build->add_option("--seed", build_kmeans.seed)->capture_default_str();
  build->add_option("--max-iter", build_kmeans.max_iter)->capture_default_str();
  build->add_option("--budget", build_budget, "Prototype budget or 'unlimited'")->capture_default_str();
  build->add_flag("--protect-server", build_protect, "Never evict server prototypes");
  build->add_option("--out", build_out, "Store document path")->required();

  // evaluate
  std::string eval_store, eval_train, eval_test, eval_out, eval_budget, eval_format = "table";
  pc::ProtocolConfig eval_cfg;
  bool eval_protect = false;
  auto* evaluate = app.add_subcommand("evaluate", "Run the few-shot correction protocol");
  auto* store_opt = evaluate->add_option("--store", eval_store, "Initial store document");
  auto* train_opt = evaluate->add_option("--train", eval_train, "Build the initial store from this dataset instead");
  store_opt->excludes(train_opt);
  evaluate->add_option("--test", eval_test, "Dataset path base (test split is used)")->required();
  evaluate->add_option("--shots", eval_cfg.shots, "Comma-separated shot counts")->delimiter(',')->capture_default_str();
  evaluate->add_option("--seeds", eval_cfg.seeds, "Comma-separated seeds")->delimiter(',')->capture_default_str();
  evaluate->add_option("--k", eval_cfg.kmeans.k, "K for building from --train; recorded in the report")->capture_default_str();
  evaluate->add_option("--budget", eval_budget, "Prototype budget or 'unlimited'");
  evaluate->add_flag("--protect-server", eval_protect);
  evaluate->add_flag("--include-support", eval_cfg.include_support_in_accE, "Count support samples in Acc_E");
  evaluate->add_option("--out", eval_out, "Report path (stdout when omitted)");
  evaluate->add_option("--format", eval_format)->check(CLI::IsMember({"table", "json"}))->capture_default_str();

  // serve
  int port = 8080;
  std::string host = "0.0.0.0", serve_train, serve_test, serve_budget = "unlimited", ui_dir = "web-ui/dist";
  int serve_k = 3;
  std::uint64_t serve_seed = 0;
  bool serve_protect = false;
  pc::ServiceOptions service_opts;
  auto* serve = app.add_subcommand("serve", "Start the HTTP correction service");
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--train", serve_train, "Start a session with this training dataset");
  serve->add_option("--test", serve_test, "Test dataset for the startup session");
  serve->add_option("--k", serve_k)->capture_default_str();
  serve->add_option("--seed", serve_seed)->capture_default_str();
  serve->add_option("--budget", serve_budget)->capture_default_str();
  serve->add_flag("--protect-server", serve_protect);
  serve->add_flag("--open-class", service_opts.open_class, "Accept corrections that introduce new classes");
  serve->add_flag("--reveal-labels", service_opts.reveal_labels, "Include ground truth in item listings");
  serve->add_option("--ui-dir", ui_dir, "Static UI bundle served under /")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const auto out = pc::generate_synthetic(synth_cfg);
      pc::write_embeddings(out.data, synth_out);
      std::cout << "wrote " << out.data.size() << " records (dim " << out.data.dim << ", seed "
                << out.effective_seed << ") to " << synth_out << ".pemb\n";
      return 0;
    }

    if (*build) {
      const auto train = load_split(build_train, pc::Split::Train);
      pc::StoreConfig scfg{parse_budget(build_budget), build_protect};
      const auto store = pc::build_initial_prototypes(train, build_kmeans, scfg);
      pc::export_store(store, build_out);
      std::cout << "wrote " << store.size() << " prototypes for " << train.classes.size() << " classes to "
                << build_out << "\n";
      return 0;
    }

    if (*evaluate) {
      if (eval_store.empty() && eval_train.empty()) {
        std::cerr << "evaluate: one of --store or --train is required\n";
        return 2;
      }
      const auto test = load_split(eval_test, pc::Split::Test);
      eval_cfg.store.protect_server = eval_protect;
      if (!eval_budget.empty()) eval_cfg.store.budget = parse_budget(eval_budget);

      pc::MetricsReport report;
      if (!eval_store.empty()) {
        auto store = pc::import_store(eval_store);
        if (store.dim() != test.dim) throw pc::Error(pc::ErrorKind::DimensionMismatch, "store and test dims differ");
        pc::StoreConfig scfg = store.config();
        if (!eval_budget.empty()) scfg.budget = eval_cfg.store.budget;
        if (eval_protect) scfg.protect_server = true;
        eval_cfg.store = scfg;
        store = pc::PrototypeStore::restore(store.dim(), scfg, store.clock(), store.next_proto_id(), store.entries());
        report = pc::run_protocol(store, test, eval_cfg);
      } else {
        const auto train = load_split(eval_train, pc::Split::Train);
        report = pc::run_protocol(train, test, eval_cfg);
      }
      const auto format = eval_format == "json" ? pc::ReportFormat::Json : pc::ReportFormat::Table;
      if (eval_out.empty()) {
        std::cout << (format == pc::ReportFormat::Json ? pc::report_to_json(report) : pc::report_to_table(report));
      } else {
        pc::emit_report(report, eval_out, format);
      }
      return 0;
    }

    if (*serve) {
      pc::Service service(service_opts);
      if (!serve_train.empty() || !serve_test.empty()) {
        pc::SessionParams params;
        params.train_path = serve_train;
        params.test_path = serve_test.empty() ? serve_train : serve_test;
        params.k = serve_k;
        params.seed = serve_seed;
        params.store = {parse_budget(serve_budget), serve_protect};
        std::cout << service.start_session(params) << "\n";
      }
      httplib::Server server;
      service.mount(server, ui_dir);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << host << ":" << port << "\n" << std::flush;
      if (!server.listen(host, port)) {
        std::cerr << "could not bind " << host << ":" << port << "\n";
        return 1;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
