// Command-line entry points for every pipeline stage.
//
// Exit codes: 0 success, 1 runtime failure (e.g. diverged training),
// 2 bad usage, missing or malformed input.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "swire/dataset/manifest.hpp"
#include "swire/dataset/synthetic.hpp"
#include "swire/encoder/encoder.hpp"
#include "swire/eval/eval.hpp"
#include "swire/imaging/io.hpp"
#include "swire/index/index.hpp"
#include "swire/pipeline/pipeline.hpp"
#include "swire/service/query.hpp"
#include "swire/service/server.hpp"
#include "swire/trainer/trainer.hpp"
#include "swire/util/error.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace swire;

namespace {

// Thrown for problems with the user's input; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw UsageError(what + " not found: " + p.string());
}

index::GridDims parse_grid(const std::string& text) {
  if (text == "none" || text == "0x0") return {0, 0};
  const auto x = text.find('x');
  try {
    if (x != std::string::npos) {
      std::size_t used_r = 0, used_c = 0;
      const int r = std::stoi(text.substr(0, x), &used_r);
      const int c = std::stoi(text.substr(x + 1), &used_c);
      if (used_r == x && used_c == text.size() - x - 1 && r > 0 && c > 0) return {r, c};
    }
  } catch (const std::exception&) {
  }
  throw UsageError("--grid: expected ROWSxCOLS (e.g. 3x3) or none, got '" + text + "'");
}

std::vector<bool> parse_mask(const std::string& text) {
  std::vector<bool> mask;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "1" || tok == "true") {
      mask.push_back(true);
    } else if (tok == "0" || tok == "false") {
      mask.push_back(false);
    } else {
      throw UsageError("--mask: expected comma-separated 0/1 values, got '" + text + "'");
    }
  }
  return mask;
}

std::optional<std::string> optional_text(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return s;
}

void print_json(const json& doc) { std::cout << doc.dump(2) << '\n'; }

std::string format_distance(float d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(d));
  return buf;
}

// --- generate --------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  dataset::CorpusConfig corpus;
  bool no_raw = false;
};

void run_generate(const GenerateArgs& a, bool as_json) {
  dataset::CorpusConfig c = a.corpus;
  c.write_raw = !a.no_raw;
  const auto m = dataset::generate_corpus(c, a.out);
  const auto st = dataset::stats(m);
  if (as_json) {
    print_json({{"manifest", (fs::path(a.out) / "manifest.json").string()},
                {"pairs", st.pairs},
                {"designers", st.designers},
                {"apps", st.apps}});
  } else {
    std::cout << "wrote " << st.pairs << " pairs (" << st.designers << " designers, " << st.apps << " apps) to "
              << a.out << '\n';
  }
}

// --- preprocess ------------------------------------------------------------

struct PreprocessArgs {
  std::string manifest;
  std::string out;
  float threshold = 0.5f;
};

void run_preprocess(const PreprocessArgs& a, bool as_json) {
  require_file(a.manifest, "manifest");
  auto m = dataset::load_manifest(a.manifest);
  std::size_t done = 0;
  for (auto& r : m.pairs) {
    if (!r.sketch_raw || !r.corners) continue;
    const auto shot = dataset::load_screenshot(m, r);
    const auto photo = imaging::read_gray(m.resolve(*r.sketch_raw));
    const auto sketch = dataset::postprocess(photo, *r.corners, shot.width, shot.height, a.threshold);
    if (!r.sketch) r.sketch = fs::path("sketches") / (r.id + "-" + r.designer + ".png");
    fs::create_directories(m.resolve(*r.sketch).parent_path());
    imaging::write_png(sketch, m.resolve(*r.sketch));
    ++done;
  }
  const fs::path out = a.out.empty() ? fs::path(a.manifest) : fs::path(a.out);
  if (!a.out.empty() && fs::absolute(out).parent_path() != fs::absolute(a.manifest).parent_path()) {
    throw UsageError("--out: the manifest must stay next to its files (" + fs::path(a.manifest).parent_path().string() +
                     ")");
  }
  dataset::save_manifest(m, out);
  if (as_json) {
    print_json({{"manifest", out.string()}, {"processed", done}});
  } else {
    std::cout << "processed " << done << " sketches, manifest " << out.string() << '\n';
  }
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string out;
  std::string profile = "desk";
  std::string held_out;
  std::string mode = "full";
  std::string grid = "3x3";
  bool l2_normalize = false;
  trainer::TrainConfig config;
  std::string checkpoint_dir;
  std::string loss_csv;
};

void run_train(const TrainArgs& a, bool as_json) {
  require_file(a.manifest, "manifest");
  const auto m = dataset::load_manifest(a.manifest);
  const auto s = trainer::split(m, optional_text(a.held_out));
  auto enc = encoder::EncoderConfig::from_profile(a.profile);
  enc.l2_normalize = a.l2_normalize;
  pipeline::TrainMode mode;
  if (a.mode == "full") {
    mode = pipeline::TrainMode::full;
  } else if (a.mode == "cells") {
    mode = pipeline::TrainMode::cells;
  } else {
    throw UsageError("--mode: expected full or cells, got '" + a.mode + "'");
  }
  auto tc = a.config;
  tc.checkpoint_dir = a.checkpoint_dir;
  tc.loss_csv = a.loss_csv;
  tc.validate();
  const auto data = pipeline::load_train_data(m, s.train, enc, mode, parse_grid(a.grid));
  const auto init = encoder::build(enc, tc.seed);
  const auto res = trainer::train(tc, init, data, nullptr, [&](const trainer::EpochStats& e) {
    if (as_json) return;
    std::cerr << "epoch " << e.epoch << " loss " << e.mean_loss;
    if (e.val_top10 >= 0) std::cerr << " val_top10 " << e.val_top10;
    std::cerr << '\n';
  });
  fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  encoder::save(res.weights, out);
  const auto fp = encoder::fingerprint(res.weights);
  if (as_json) {
    print_json({{"weights", out.string()},
                {"fingerprint", fp},
                {"train_examples", data.ids.size()},
                {"held_out_designer", s.held_out_designer},
                {"epochs", res.epochs.size()},
                {"best_epoch", res.best_epoch},
                {"stopped_early", res.stopped_early}});
  } else {
    std::cout << "trained on " << data.ids.size() << " examples (held out " << s.held_out_designer << "), "
              << res.epochs.size() << " epochs, weights " << out.string() << " [" << fp << "]\n";
  }
}

// --- build-index -----------------------------------------------------------

struct IndexArgs {
  std::string manifest;
  std::string weights;
  std::string segment_weights;
  std::string out;
  std::string grid = "3x3";
  std::string subset = "all";
  std::string held_out;
};

pipeline::Models load_models(const std::string& weights, const std::string& segment_weights) {
  require_file(weights, "weights");
  pipeline::Models models{encoder::load(weights), std::nullopt};
  if (!segment_weights.empty()) {
    require_file(segment_weights, "segment weights");
    models.segments = encoder::load(segment_weights);
  }
  return models;
}

void run_build_index(const IndexArgs& a, bool as_json) {
  require_file(a.manifest, "manifest");
  const auto models = load_models(a.weights, a.segment_weights);
  const auto m = dataset::load_manifest(a.manifest);
  std::vector<dataset::PairRecord> records;
  if (a.subset == "all") {
    records = m.pairs;
  } else if (a.subset == "train" || a.subset == "test") {
    const auto s = trainer::split(m, optional_text(a.held_out));
    records = a.subset == "train" ? s.train : s.test;
  } else {
    throw UsageError("--subset: expected all, train or test, got '" + a.subset + "'");
  }
  const auto idx = pipeline::build_index(m, records, models, parse_grid(a.grid));
  fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  idx.save(out);
  if (as_json) {
    print_json({{"index", out.string()},
                {"items", idx.size()},
                {"has_parts", idx.has_parts()},
                {"max_trace_length", idx.max_trace_length()},
                {"fingerprint", idx.fingerprint()}});
  } else {
    std::cout << "indexed " << idx.size() << " items, " << out.string() << " [" << idx.fingerprint() << "]\n";
  }
}

// --- evaluate --------------------------------------------------------------

struct EvaluateArgs {
  std::string manifest;
  std::string weights;
  std::string held_out;
  std::string report;
};

void run_evaluate(const EvaluateArgs& a, bool as_json) {
  require_file(a.weights, "weights");
  require_file(a.manifest, "manifest");
  const pipeline::Models models{encoder::load(a.weights), std::nullopt};
  const auto m = dataset::load_manifest(a.manifest);
  const auto s = trainer::split(m, optional_text(a.held_out));
  const auto base = eval::fit_baseline(m, s.train);
  const auto rep = eval::run_eval(m, s.test, models, base);
  if (!a.report.empty()) {
    std::ofstream f(a.report);
    if (!f) throw UsageError("cannot write report: " + a.report);
    f << rep.to_json() << '\n';
  }
  if (as_json) {
    std::cout << rep.to_json() << '\n';
  } else {
    std::cout << rep.to_text();
  }
}

// --- query -----------------------------------------------------------------

struct QueryArgs {
  std::string weights;
  std::string segment_weights;
  std::string index;
  std::string mode = "full";
  int k = 10;
  std::string mask;
  std::vector<std::string> images;
};

void run_query(const QueryArgs& a, bool as_json) {
  service::SnapshotPaths paths{a.weights, a.segment_weights, a.index, {}};
  require_file(a.weights, "weights");
  require_file(a.index, "index");
  const auto snap = service::load_snapshot(paths);
  service::QueryRequest q;
  q.k = a.k;
  if (a.mode == "full") {
    q.mode = service::Mode::full;
  } else if (a.mode == "segments") {
    q.mode = service::Mode::segments;
  } else if (a.mode == "flow") {
    q.mode = service::Mode::flow;
  } else {
    throw UsageError("--mode: expected full, segments or flow, got '" + a.mode + "'");
  }
  for (const auto& img : a.images) require_file(img, "image");
  if (q.mode == service::Mode::flow) {
    for (const auto& img : a.images) q.flow.push_back(imaging::read_bytes(img));
  } else {
    if (a.images.size() != 1) throw UsageError("--mode " + a.mode + " takes exactly one sketch image");
    q.image = imaging::read_bytes(a.images.front());
  }
  if (!a.mask.empty()) q.mask = parse_mask(a.mask);

  const auto t0 = std::chrono::steady_clock::now();
  service::QueryResponse out;
  out.results = service::execute(*snap, q);
  out.mode = q.mode;
  out.index_fingerprint = snap->index_fingerprint;
  out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (as_json) {
    std::cout << service::response_json(out, *snap) << '\n';
    return;
  }
  for (const auto& hit : out.results) std::cout << hit.id << ' ' << format_distance(hit.distance) << '\n';
}

// --- serve -----------------------------------------------------------------

std::atomic<bool> g_reload{false};
std::atomic<bool> g_stop{false};

extern "C" void on_signal(int sig) {
  if (sig == SIGHUP) {
    g_reload = true;
  } else {
    g_stop = true;
  }
}

struct ServeArgs {
  std::string weights;
  std::string segment_weights;
  std::string index;
  std::string manifest;
  std::string host = "127.0.0.1";
  int port = 8080;
};

void run_serve(const ServeArgs& a) {
  service::ServerConfig cfg;
  cfg.paths = {a.weights, a.segment_weights, a.index, a.manifest};
  cfg.host = a.host;
  cfg.port = a.port;
  if (const char* token = std::getenv("SWIRE_ADMIN_TOKEN")) cfg.admin_token = token;
  require_file(a.weights, "weights");
  require_file(a.index, "index");
  service::Server server(cfg);
  server.reload();
  std::signal(SIGHUP, on_signal);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const int port = server.start();
  if (port < 0) throw UsageError("cannot bind " + a.host + ":" + std::to_string(a.port));
  std::cerr << "serving on http://" << a.host << ':' << port << " (index " << server.snapshot()->index_fingerprint
            << ")\n";
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    if (g_reload.exchange(false)) {
      try {
        server.reload();
        std::cerr << "reloaded (index " << server.snapshot()->index_fingerprint << ")\n";
      } catch (const std::exception& e) {
        std::cerr << "reload failed, previous snapshot kept: " << e.what() << '\n';
      }
    }
  }
  server.stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"swire: sketch-based UI retrieval"};
  app.set_config("--config", "", "TOML/INI file with option values; command-line flags override it");
  app.require_subcommand(1);
  app.fallthrough();
  bool as_json = false;
  app.add_flag("--json", as_json, "Machine-readable JSON on stdout");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic sketch/screenshot corpus");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--n", gen.corpus.n, "Number of pairs")->capture_default_str();
  g->add_option("--designers", gen.corpus.designers, "Number of designers")->capture_default_str();
  g->add_option("--apps", gen.corpus.apps, "Number of apps")->capture_default_str();
  g->add_option("--seed", gen.corpus.seed, "Seed")->capture_default_str();
  g->add_option("--trace-length", gen.corpus.trace_length, "Screens per flow trace")->capture_default_str();
  g->add_flag("--no-raw", gen.no_raw, "Skip the photographed sketches");

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "Rectify and binarize photographed sketches listed in a manifest");
  p->add_option("--manifest", pre.manifest, "Manifest JSON")->required();
  p->add_option("--out", pre.out, "Updated manifest (default: overwrite)");
  p->add_option("--threshold", pre.threshold, "Binarization threshold in [0, 1]")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the twin encoder on the training split");
  t->add_option("--manifest", tr.manifest, "Manifest JSON")->required();
  t->add_option("--out", tr.out, "Output weights file")->required();
  t->add_option("--profile", tr.profile, "Encoder profile: desk or full")->capture_default_str();
  t->add_option("--held-out", tr.held_out, "Designer held out for testing (default: last)");
  t->add_option("--mode", tr.mode, "full, or cells to train the segment model")->capture_default_str();
  t->add_option("--grid", tr.grid, "Cell grid for --mode cells")->capture_default_str();
  t->add_flag("--l2-normalize", tr.l2_normalize, "L2-normalize embeddings");
  t->add_option("--epochs", tr.config.epochs)->capture_default_str();
  t->add_option("--batch", tr.config.batch_size)->capture_default_str();
  t->add_option("--lr", tr.config.lr)->capture_default_str();
  t->add_option("--lr-decay", tr.config.lr_decay, "Per-epoch learning-rate factor")->capture_default_str();
  t->add_option("--margin", tr.config.margin)->capture_default_str();
  t->add_option("--seed", tr.config.seed)->capture_default_str();
  t->add_option("--patience", tr.config.patience, "Early-stopping patience in epochs (0 disables)")
      ->capture_default_str();
  t->add_option("--validation-fraction", tr.config.validation_fraction)->capture_default_str();
  t->add_option("--checkpoint-dir", tr.checkpoint_dir, "Per-epoch checkpoints");
  t->add_option("--loss-csv", tr.loss_csv, "Per-step loss log");

  IndexArgs ix;
  auto* b = app.add_subcommand("build-index", "Embed screenshots into a searchable index");
  b->add_option("--manifest", ix.manifest, "Manifest JSON")->required();
  b->add_option("--weights", ix.weights, "Encoder weights")->required();
  b->add_option("--segment-weights", ix.segment_weights, "Cell encoder weights");
  b->add_option("--out", ix.out, "Output index file")->required();
  b->add_option("--grid", ix.grid, "Part grid, or none")->capture_default_str();
  b->add_option("--subset", ix.subset, "all, train or test")->capture_default_str();
  b->add_option("--held-out", ix.held_out, "Held-out designer for --subset");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Top-1/Top-10 of chance, BoW-HOG and the encoder on the test split");
  e->add_option("--manifest", ev.manifest, "Manifest JSON")->required();
  e->add_option("--weights", ev.weights, "Encoder weights")->required();
  e->add_option("--held-out", ev.held_out, "Held-out designer (default: last)");
  e->add_option("--report", ev.report, "Also write the JSON report here");

  QueryArgs qa;
  auto* q = app.add_subcommand("query", "Rank indexed items for a sketch (or a flow of sketches)");
  q->add_option("--weights", qa.weights, "Encoder weights")->required();
  q->add_option("--segment-weights", qa.segment_weights, "Cell encoder weights");
  q->add_option("--index", qa.index, "Index file")->required();
  q->add_option("--mode", qa.mode, "full, segments or flow")->capture_default_str();
  q->add_option("--k", qa.k, "Results to return")->capture_default_str();
  q->add_option("--mask", qa.mask, "Segments mask, comma-separated 0/1 row-major");
  q->add_option("images", qa.images, "Sketch image(s); several for flow")->required();

  ServeArgs sv;
  auto* s = app.add_subcommand("serve", "HTTP query service (SIGHUP reloads; SWIRE_ADMIN_TOKEN enables /index/reload)");
  s->add_option("--weights", sv.weights, "Encoder weights")->required();
  s->add_option("--segment-weights", sv.segment_weights, "Cell encoder weights");
  s->add_option("--index", sv.index, "Index file")->required();
  s->add_option("--manifest", sv.manifest, "Manifest for screenshot lookup");
  s->add_option("--host", sv.host)->capture_default_str();
  s->add_option("--port", sv.port, "0 picks a free port")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 2;
  }

  auto fail = [&](int code, const std::string& msg) {
    if (as_json) {
      std::cout << json{{"error", msg}, {"exit_code", code}}.dump() << '\n';
    }
    std::cerr << "swire: " << msg << '\n';
    return code;
  };
  try {
    if (*g) run_generate(gen, as_json);
    if (*p) run_preprocess(pre, as_json);
    if (*t) run_train(tr, as_json);
    if (*b) run_build_index(ix, as_json);
    if (*e) run_evaluate(ev, as_json);
    if (*q) run_query(qa, as_json);
    if (*s) run_serve(sv);
  } catch (const UsageError& ex) {
    return fail(2, ex.what());
  } catch (const service::RequestError& ex) {
    return fail(2, ex.field() + ": " + ex.what());
  } catch (const InvalidArgument& ex) {
    return fail(2, ex.what());
  } catch (const IoError& ex) {
    return fail(2, ex.what());
  } catch (const FormatError& ex) {
    return fail(2, ex.what());
  } catch (const ShapeError& ex) {
    return fail(2, ex.what());
  } catch (const std::exception& ex) {
    return fail(1, ex.what());
  }
  return 0;
}
