// rexpath: corpus ingestion, featurization, training, evaluation and
// inspection from the command line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rexpath/rexpath.hpp"

namespace fs = std::filesystem;
using namespace rexpath;
using nlohmann::json;

namespace {

void write_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  out << j.dump(2) << '\n';
}

json node_json(const PageRecord& page, int node_id) {
  const auto& n = page.nodes.at(static_cast<std::size_t>(node_id));
  return {{"node_id", n.node_id}, {"text", n.text}, {"xpath", xpath_to_string(n.xpath)}};
}

const PageRecord& find_page(const Corpus& corpus, const std::string& page_id) {
  for (const auto& p : corpus.pages) {
    if (p.page_id == page_id) return p;
  }
  throw Error(ErrorKind::kIdOutOfRange, "no page '" + page_id + "' in corpus");
}

Corpus only_vertical(const Corpus& corpus, const std::string& vertical) {
  if (vertical.empty()) return corpus;
  const auto vs = corpus.verticals();
  if (std::find(vs.begin(), vs.end(), vertical) == vs.end()) {
    throw Error(ErrorKind::kUnknownVertical, "no vertical named '" + vertical + "'");
  }
  Corpus out;
  out.provenance = corpus.provenance;
  for (const auto& p : corpus.pages) {
    if (p.vertical != vertical) continue;
    out.pages.push_back(p);
    out.gold[p.page_id] = corpus.gold_for(p.page_id);
  }
  return out;
}

RunConfig config_or_default(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

json train_summary(const TrainResult& r) {
  json curve = json::array();
  for (const auto& [step, f1] : r.val_curve) curve.push_back({{"step", step}, {"val_f1", f1}});
  return {{"steps", r.steps}, {"best_step", r.best_step}, {"best_val_f1", r.best_val_f1},
          {"final_loss", r.final_loss}, {"seconds", r.seconds}, {"val_curve", curve}};
}

void write_predictions(std::ostream& out, const PageRecord& page, const std::vector<PairScore>& scores) {
  for (const auto& s : scores) {
    out << json{{"page_id", page.page_id},
                {"subject", node_json(page, s.subject)},
                {"object", node_json(page, s.object)},
                {"probability", s.probability}}
               .dump()
        << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rexpath: zero-shot key-value pair extraction from web pages"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "parse a <vertical>/<website>/<page>.html tree into a corpus");
  std::string pages_dir, annotations, out_dir;
  double max_mismatch = 0.2;
  int depth_cap = kDefaultDepthCap;
  ingest->add_option("--pages", pages_dir, "page tree root")->required();
  ingest->add_option("--annotations", annotations, "pairs.jsonl with {page_id, subject, object}");
  ingest->add_option("--max-mismatch", max_mismatch, "tolerated fraction of unmatched annotations");
  ingest->add_option("--depth-cap", depth_cap, "maximum XPath depth kept");
  ingest->add_option("--out", out_dir, "corpus output directory")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic template corpus");
  std::string config_path, html_dir;
  std::uint64_t seed = 13;
  int synth_pages = 50, synth_sites = 3;
  synth->add_option("--config", config_path, "run config with a \"synth\" section");
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--pages", synth_pages, "pages per website when no config is given");
  synth->add_option("--websites", synth_sites, "websites per vertical when no config is given");
  synth->add_option("--html", html_dir, "also write the rendered page tree here");
  synth->add_option("--out", out_dir, "corpus output directory")->required();

  // featurize
  auto* featurize = app.add_subcommand("featurize", "encode the pages of one vertical");
  std::string corpus_dir, vertical, vocab_path, out_path, checkpoint, pop_dir;
  featurize->add_option("--corpus", corpus_dir, "corpus directory")->required();
  featurize->add_option("--vertical", vertical, "vertical to encode")->required();
  featurize->add_option("--vocab", vocab_path, "vocabulary file (built from the vertical when absent)");
  featurize->add_option("--checkpoint", checkpoint, "take vocabulary and feature sizes from a checkpoint");
  featurize->add_option("--config", config_path, "run config");
  featurize->add_option("--popularity-dir", pop_dir, "write one popularity sidecar per website here");
  featurize->add_option("--out", out_path, "encoded examples (.jsonl)")->required();

  // train
  auto* train = app.add_subcommand("train", "train on all verticals but one and evaluate on it");
  std::string test_vertical, report_path;
  train->add_option("--corpus", corpus_dir, "corpus directory")->required();
  train->add_option("--test-vertical", test_vertical, "held-out vertical")->required();
  train->add_option("--config", config_path, "run config");
  train->add_option("--out", out_path, "checkpoint path")->required();
  train->add_option("--report", report_path, "JSON report path (stdout when absent)");
  bool verbose = false;
  train->add_flag("-v,--verbose", verbose, "log validation progress");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a checkpoint on a vertical");
  double threshold = 0.5;
  std::string predictions_path;
  bool allow_seen = false;
  evaluate_cmd->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  evaluate_cmd->add_option("--corpus", corpus_dir, "corpus directory")->required();
  evaluate_cmd->add_option("--vertical", vertical, "vertical to evaluate (all pages when absent)");
  evaluate_cmd->add_option("--threshold", threshold, "decode threshold, strict");
  evaluate_cmd->add_option("--predictions", predictions_path, "write predicted pairs here");
  evaluate_cmd->add_option("--report", report_path, "JSON report path (stdout when absent)");
  evaluate_cmd->add_flag("--allow-seen-websites", allow_seen, "skip the zero-shot website check");

  // extract
  auto* extract = app.add_subcommand("extract", "predict pairs for a single HTML page");
  std::string page_file, site_dir;
  extract->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  extract->add_option("--page", page_file, "HTML file")->required();
  extract->add_option("--site-dir", site_dir, "pages of the same website for popularity (default: the page's directory)");
  extract->add_option("--threshold", threshold, "decode threshold, strict");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "train and evaluate one or all ablation variants");
  std::string variant = "all";
  std::vector<std::uint64_t> seeds;
  ablate->add_option("--corpus", corpus_dir, "corpus directory")->required();
  ablate->add_option("--test-vertical", test_vertical, "held-out vertical")->required();
  ablate->add_option("--variant", variant, "full | no_relxpath | no_relxpath_no_pop | all");
  ablate->add_option("--config", config_path, "run config");
  ablate->add_option("--seeds", seeds, "training seeds (default: the config seed)")->delimiter(',');
  ablate->add_option("--report", report_path, "JSON report path (stdout when absent)");

  // colon
  auto* colon = app.add_subcommand("colon", "score the colon heuristic");
  colon->add_option("--corpus", corpus_dir, "corpus directory")->required();
  colon->add_option("--vertical", vertical, "restrict to one vertical");

  // inspect-xpath
  auto* inspect = app.add_subcommand("inspect-xpath", "show the structural relation between two nodes");
  std::string page_id;
  int node_i = 0, node_j = 0;
  inspect->add_option("--corpus", corpus_dir, "corpus directory")->required();
  inspect->add_option("--page", page_id, "page id")->required();
  inspect->add_option("--i", node_i, "first node id")->required();
  inspect->add_option("--j", node_j, "second node id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*ingest) {
      IngestReport report;
      Corpus corpus = annotations.empty() ? ingest_pages(pages_dir, &report, depth_cap)
                                          : ingest_swde(pages_dir, annotations, max_mismatch, &report, depth_cap);
      save_corpus(corpus, out_dir);
      json j = {{"files", report.files}, {"pages", corpus.pages.size()}, {"malformed", report.malformed},
                {"empty", report.empty}, {"gold_pairs", corpus.total_gold()}};
      if (!annotations.empty()) {
        j["annotations"] = {{"total", report.matching.total}, {"by_xpath", report.matching.by_xpath},
                            {"by_fallback", report.matching.by_fallback}, {"unmatched", report.matching.unmatched},
                            {"duplicates", report.matching.duplicates}};
      }
      for (const auto& s : corpus_stats(corpus)) {
        j["verticals"][s.vertical] = {{"websites", s.websites}, {"pages", s.pages}, {"mean_pairs_per_page", s.mean_pairs_per_page}};
      }
      write_json(j, "-");
    } else if (*synth) {
      SynthConfig sc = default_synth_config(synth_pages, synth_sites);
      if (!config_path.empty()) {
        RunConfig rc = load_run_config(config_path);
        if (!rc.synth) throw Error(ErrorKind::kInvalidConfig, config_path + " has no \"synth\" section");
        sc = *rc.synth;
      }
      std::vector<std::pair<std::string, std::string>> html;
      Corpus corpus = generate_synthetic(sc, seed, html_dir.empty() ? nullptr : &html);
      save_corpus(corpus, out_dir);
      for (const auto& [id, text] : html) {
        const fs::path path = fs::path(html_dir) / (id + ".html");
        fs::create_directories(path.parent_path());
        std::ofstream(path, std::ios::binary) << text;
      }
      if (!html_dir.empty()) {
        std::ofstream ann(fs::path(html_dir) / "pairs.jsonl");
        for (const auto& a : corpus_annotations(corpus)) ann << annotation_to_json(a).dump() << '\n';
      }
      std::cout << json{{"pages", corpus.pages.size()}, {"gold_pairs", corpus.total_gold()},
                        {"verticals", corpus.verticals()}}
                       .dump()
                << '\n';
    } else if (*featurize) {
      const Corpus corpus = only_vertical(load_corpus(corpus_dir), vertical);
      RunConfig rc = config_or_default(config_path);
      Vocab vocab;
      FeatureConfig fc = rc.encoder.features(rc.train.max_nodes);
      if (!checkpoint.empty()) {
        const auto model = load_checkpoint<float>(checkpoint);
        vocab = model.vocab;
        fc = model.features();
      } else if (!vocab_path.empty()) {
        vocab = Vocab::load(vocab_path);
      } else {
        vocab = Vocab::build(corpus.page_ptrs(), rc.train.min_word_freq, rc.train.min_word_websites);
        vocab.save(out_path + ".vocab");
      }
      const auto examples = featurize_corpus(corpus, vocab, fc);
      write_examples(examples, out_path, vocab.hash());
      if (!pop_dir.empty()) {
        fs::create_directories(pop_dir);
        for (const auto& [site, index] : website_indexes(corpus)) {
          write_popularity(index, (fs::path(pop_dir) / (site + ".pop")).string());
        }
      }
      long dropped_gold = 0, dropped_nodes = 0;
      for (const auto& ex : examples) {
        dropped_gold += ex.dropped_gold;
        dropped_nodes += ex.dropped_nodes;
      }
      std::cout << json{{"examples", examples.size()}, {"vocab_size", vocab.size()}, {"vocab_hash", vocab.hash()},
                        {"dropped_gold", dropped_gold}, {"dropped_nodes", dropped_nodes}}
                       .dump()
                << '\n';
    } else if (*train) {
      RunConfig rc = config_or_default(config_path);
      rc.train.verbose = verbose;
      const Corpus corpus = load_corpus(corpus_dir);
      auto [train_split, test_split] = split_zero_shot(corpus, test_vertical);
      TrainResult tr = train_model(train_split, rc.encoder, rc.train);
      save_checkpoint(tr.model, out_path, {{"test_vertical", test_vertical}, {"run_config", run_config_to_json(rc)}});
      const EvalReport report = evaluate(tr.model, test_split, rc.train.threshold);
      write_json({{"training", train_summary(tr)}, {"test", report.to_json()}, {"checkpoint", out_path}}, report_path);
    } else if (*evaluate_cmd) {
      const auto model = load_checkpoint<float>(checkpoint);
      const Corpus corpus = only_vertical(load_corpus(corpus_dir), vertical);
      if (!allow_seen) {
        const auto sites = corpus.websites();
        for (const auto& w : model.train_websites) {
          if (sites.count(w)) throw Error(ErrorKind::kZeroShotLeak, "website " + w + " was used in training");
        }
      }
      const auto examples = featurize_corpus(corpus, model.vocab, model.features());
      EvalReport report;
      std::ofstream preds;
      if (!predictions_path.empty()) {
        preds.open(predictions_path);
        if (!preds) throw Error(ErrorKind::kIo, "cannot write " + predictions_path);
      }
      for (std::size_t i = 0; i < examples.size(); ++i) {
        std::vector<PairScore> scores;
        std::size_t scored = 0;
        const auto predicted = predict(model, examples[i], threshold, &scores, &scored);
        report.add_page(corpus.pages[i], score_page(predicted, corpus.gold_for(corpus.pages[i].page_id)));
        report.dropped_gold += examples[i].dropped_gold;
        report.scored_pairs += static_cast<long>(scored);
        if (preds.is_open()) write_predictions(preds, corpus.pages[i], scores);
      }
      write_json(report.to_json(), report_path);
    } else if (*extract) {
      const auto model = load_checkpoint<float>(checkpoint);
      const fs::path page_path(page_file);
      const fs::path dir = site_dir.empty() ? page_path.parent_path() : fs::path(site_dir);
      const std::string website = dir.filename().string();
      PageRecord page = parse_page(read_file(page_path), page_path.stem().string(), website, "");
      std::vector<PageRecord> site_pages;
      if (fs::is_directory(dir)) {
        for (const auto& e : fs::directory_iterator(dir)) {
          const auto ext = e.path().extension().string();
          if (!e.is_regular_file() || (ext != ".html" && ext != ".htm")) continue;
          try {
            site_pages.push_back(parse_page(read_file(e.path()), e.path().stem().string(), website, ""));
          } catch (const Error& err) {
            log_warn("skipping " + e.path().string() + ": " + err.what());
          }
        }
      }
      if (site_pages.empty()) site_pages.push_back(page);
      const PopularityIndex index = build_index(site_pages);
      const EncodedExample ex = featurize_page(page, {}, model.vocab, index, model.features());
      std::vector<PairScore> scores;
      predict(model, ex, threshold, &scores);
      write_predictions(std::cout, page, scores);
    } else if (*ablate) {
      RunConfig rc = config_or_default(config_path);
      const Corpus corpus = load_corpus(corpus_dir);
      if (seeds.empty()) seeds.push_back(rc.train.seed);
      std::vector<Variant> variants;
      if (variant == "all") {
        variants = {Variant::kFull, Variant::kNoRelXPath, Variant::kNoRelXPathNoPop};
      } else {
        variants = {parse_variant(variant)};
      }
      json out;
      for (Variant v : variants) {
        double sum = 0.0;
        json runs = json::array();
        for (std::uint64_t s : seeds) {
          TrainConfig tc = rc.train;
          tc.seed = s;
          const ZeroShotResult r = run_zero_shot(corpus, test_vertical, rc.encoder, tc, v);
          sum += r.test.overall.f1();
          runs.push_back({{"seed", s}, {"training", train_summary(r.training)}, {"test", r.test.to_json()}});
        }
        out[variant_name(v)] = {{"mean_f1", sum / static_cast<double>(seeds.size())}, {"runs", runs}};
      }
      write_json(out, report_path);
    } else if (*colon) {
      const Corpus corpus = only_vertical(load_corpus(corpus_dir), vertical);
      write_json(evaluate_colon_baseline(corpus).to_json(), "-");
    } else if (*inspect) {
      const Corpus corpus = load_corpus(corpus_dir);
      const PageRecord& page = find_page(corpus, page_id);
      const int n = static_cast<int>(page.nodes.size());
      if (node_i < 0 || node_i >= n || node_j < 0 || node_j >= n) {
        throw Error(ErrorKind::kIdOutOfRange, "node ids must be in [0, " + std::to_string(n) + ")");
      }
      const auto& a = page.nodes[static_cast<std::size_t>(node_i)];
      const auto& b = page.nodes[static_cast<std::size_t>(node_j)];
      const CommonPrefix cp = common_prefix(a.xpath, b.xpath);
      const RelativeXPath ab = relative_xpath(a.xpath, b.xpath);
      const RelativeXPath ba = relative_xpath(b.xpath, a.xpath);
      auto joined = [](const std::vector<std::string>& tags) {
        std::string s;
        for (const auto& t : tags) s += (s.empty() ? "" : ",") + t;
        return "[" + s + "]";
      };
      std::cout << "i       " << node_i << "  " << xpath_to_string(a.xpath) << "  \"" << a.text << "\"\n"
                << "j       " << node_j << "  " << xpath_to_string(b.xpath) << "  \"" << b.text << "\"\n"
                << "prefix  " << xpath_to_string(cp.prefix) << "\n"
                << "d       " << cp.length << "\n"
                << "i=>j    " << joined(ab.full) << "\n"
                << "j=>i    " << joined(ba.full) << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "rexpath: " << e.what() << '\n';
    return e.is_validation() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "rexpath: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
