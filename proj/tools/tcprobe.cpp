// tcprobe: dataset generation, variance probing, T/C classification, oracle
// serving, augmentation and hierarchy checks.
//
// Exit codes: 0 success, 1 internal or backend error, 2 usage or input error.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tcprobe/tcprobe.hpp"

namespace fs = std::filesystem;
using namespace tcprobe;

namespace {

constexpr const char* kVersion = "0.1.0";

#ifndef TCPROBE_DATA_DIR
#define TCPROBE_DATA_DIR "data"
#endif

struct Global {
  std::string out = "out";
  std::string words;
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct Run {
  std::string command;
  json config = json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

std::string default_words() { return std::string(TCPROBE_DATA_DIR) + "/words.txt"; }

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "";
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a64(ss.str()));
}

void log(const Global& g, const std::string& msg) {
  if (g.verbose) std::cerr << "tcprobe: " << msg << '\n';
}

std::string out_path(const Global& g, Run& run, const std::string& name) {
  fs::create_directories(g.out);
  const auto p = (fs::path(g.out) / name).string();
  run.outputs.push_back(name);
  return p;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write '" + path + "'");
  out << text;
  require(out.good(), "error writing '" + path + "'");
}

void write_manifest(const Global& g, const Run& run, const std::vector<std::string>& argv) {
  json inputs = json::array();
  for (const auto& p : run.inputs) inputs.push_back({{"path", p}, {"fnv1a64", file_digest(p)}});
  json m{{"tool", "tcprobe"},
         {"version", kVersion},
         {"libraries", {{"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                        {"cpp-httplib", CPPHTTPLIB_VERSION},
                        {"CLI11", CLI11_VERSION}}},
         {"command", run.command},
         {"argv", argv},
         {"seed", g.seed},
         {"config", run.config},
         {"inputs", inputs},
         {"outputs", run.outputs}};
  fs::create_directories(g.out);
  write_text((fs::path(g.out) / "manifest.json").string(), m.dump(2) + "\n");
}

std::vector<std::string> load_pool(const Global& g, Run& run) {
  const auto path = g.words.empty() ? default_words() : g.words;
  run.inputs.push_back(path);
  return load_word_pool(path);
}

std::vector<ProbeDataset> load_datasets(const std::string& path, Run& run) {
  require(fs::exists(path), "dataset file not found: " + path);
  run.inputs.push_back(path);
  const auto records = read_jsonl<SequenceRecord>(path);
  require(!records.empty(), "dataset file is empty: " + path);
  return datasets_from_records(records);
}

// gen

struct GenOpts {
  std::string kind;
  std::string grammar;
  std::size_t n = 100;
  std::size_t replacements = 8;
  std::size_t answers_per = 0;
};

void cmd_gen(const Global& g, const GenOpts& o, Run& run) {
  run.config = {{"kind", o.kind}, {"n", o.n}, {"replacements", o.replacements}, {"answers_per", o.answers_per},
                {"grammar", o.grammar}};
  std::vector<ProbeDataset> ds;
  std::shared_ptr<const Oracle> oracle;
  if (o.kind == "concat-letters" || o.kind == "concat-alt") {
    const auto pool = load_pool(g, run);
    ds = o.kind == "concat-letters" ? gen_concat_last_letter(pool, o.n, o.replacements, g.seed)
                                    : gen_concat_alt_template(pool, o.n, o.replacements, g.seed);
    if (o.answers_per > 0)
      oracle = std::make_shared<const Oracle>(o.kind == "concat-letters" ? concat_letters_grammar(pool)
                                                                         : concat_alt_grammar(pool));
  } else if (o.kind == "chicken-rabbit") {
    ds = gen_chicken_rabbit(ChickenRabbitParams{}, o.n, o.replacements, g.seed);
    if (o.answers_per > 0) oracle = std::make_shared<const Oracle>(chicken_rabbit_grammar());
  } else if (o.kind == "grammar") {
    require(!o.grammar.empty(), "gen grammar needs --grammar");
    if (fs::exists(o.grammar)) run.inputs.push_back(o.grammar);
    const auto gr = load_grammar(o.grammar, o.grammar.rfind("concat", 0) == 0 ? load_pool(g, run)
                                                                               : std::vector<std::string>{});
    ds = gen_from_grammar(gr, o.n, o.replacements, g.seed);
    if (o.answers_per > 0) oracle = std::make_shared<const Oracle>(gr);
  } else {
    fail(Errc::invalid_input, "unknown dataset kind: " + o.kind);
  }
  std::vector<SequenceRecord> records;
  for (const auto& d : ds) {
    auto rs = to_records(d);
    records.insert(records.end(), rs.begin(), rs.end());
  }
  write_jsonl(out_path(g, run, "dataset.jsonl"), records);
  log(g, "wrote " + std::to_string(ds.size()) + " groups, " + std::to_string(records.size()) + " sequences");
  if (oracle) {
    const auto corpus = augment_content_replacement(ds, *oracle, o.answers_per, g.seed);
    write_jsonl(out_path(g, run, "corpus.jsonl"), corpus);
    log(g, "wrote " + std::to_string(corpus.size()) + " question-answer pairs");
  }
}

// probe

struct BackendOpts {
  std::string backend = "oracle";
  std::size_t top_k = kDefaultTopK;
  int timeout = 30;
  int retries = 3;
};

std::shared_ptr<const Backend> open_backend(const Global& g, const BackendOpts& b, Run& run,
                                            const std::string& dataset_grammar) {
  auto d = parse_backend_descriptor(b.backend);
  d.top_k = b.top_k;
  d.timeout_s = b.timeout;
  d.max_retries = b.retries;
  run.config["backend"] = d.to_string();
  run.config["top_k"] = d.top_k;
  if (d.kind != BackendKind::oracle) return make_backend(d, {});
  const std::string ref = d.grammar.empty() ? dataset_grammar : d.grammar;
  require(!ref.empty(), "oracle backend needs a grammar");
  if (fs::exists(ref)) run.inputs.push_back(ref);
  const bool needs_pool = ref.rfind("concat", 0) == 0;
  d.grammar = ref;
  return make_backend(d, needs_pool ? load_pool(g, run) : std::vector<std::string>{});
}

struct ProbeOpts {
  std::string dataset;
  bool all_positions = false;
};

std::string tsv_number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void cmd_probe(const Global& g, const ProbeOpts& o, const BackendOpts& b, Run& run) {
  run.config = {{"dataset", o.dataset}, {"all_positions", o.all_positions}};
  const auto ds = load_datasets(o.dataset, run);
  const auto backend = open_backend(g, b, run, ds.front().grammar_name);
  ProbeOptions popt;
  popt.all_positions = o.all_positions;
  const auto rep = probe_datasets(*backend, ds, popt);

  write_text(out_path(g, run, "report.json"), report_summary(rep).dump(2) + "\n");
  {
    std::ofstream out(out_path(g, run, "records.jsonl"), std::ios::binary);
    for (const auto& grp : rep.groups)
      for (const auto& r : grp.records) {
        json j = r;
        j["group"] = grp.group_id;
        out << j.dump() << '\n';
      }
  }
  std::string roc = "threshold\tfpr\ttpr\n";
  for (const auto& p : rep.roc.sweep) roc += tsv_number(p.threshold) + "\t" + tsv_number(p.fpr) + "\t" + tsv_number(p.tpr) + "\n";
  write_text(out_path(g, run, "roc.tsv"), roc);
  std::string pos = "group\tposition\tword\tvariance_norm\ttruth_label\n";
  for (const auto& grp : rep.groups)
    for (const auto& r : grp.records) {
      std::string word = json(r.word).dump();  // quoted, escapes tabs and newlines
      pos += grp.group_id + "\t" + std::to_string(r.position) + "\t" + word + "\t" + tsv_number(r.variance_norm) +
             "\t" + std::to_string(r.truth_label ? r.truth_label->level : 0) + "\n";
    }
  write_text(out_path(g, run, "positions.tsv"), pos);
  std::printf("auc_roc=%.6f dmv=%.6f positions=%zu\n", rep.roc.auc, rep.dmv, rep.all_records().size());
}

// classify

struct ClassifyOpts {
  std::string dataset;
  std::string prompt_spec;
  std::string sentence;
  std::string sentences;
  std::string profile = "concat";
  double threshold = -1.0;
  std::string filter_method;
  std::size_t max_content_tokens = 0;
};

void cmd_classify(const Global& g, const ClassifyOpts& o, const BackendOpts& b, Run& run) {
  auto cfg = ClassifierConfig::profile(o.profile);
  if (o.threshold >= 0.0) cfg.threshold = o.threshold;
  if (!o.filter_method.empty()) cfg.filter_method = filter_method_from_string(o.filter_method);
  if (o.max_content_tokens > 0) cfg.max_content_tokens = o.max_content_tokens;
  cfg.validate();
  run.config = {{"profile", o.profile}, {"classifier", cfg}};

  struct Item {
    std::string id;
    PromptSpec prompt;
    std::string sentence;
    std::vector<TCLabel> truth;
  };
  std::vector<Item> items;
  std::string grammar;
  if (!o.dataset.empty()) {
    require(o.prompt_spec.empty(), "use either --dataset or --prompt-spec");
    for (const auto& d : load_datasets(o.dataset, run)) {
      auto [p, s] = classification_input(d);
      const auto& ref = d.reference.seq;
      items.push_back({d.group_id(), std::move(p), std::move(s),
                       {ref.labels.begin() + static_cast<std::ptrdiff_t>(ref.answer_begin()), ref.labels.end()}});
      grammar = d.grammar_name;
    }
  } else {
    require(!o.prompt_spec.empty(), "classify needs --dataset or --prompt-spec");
    require(fs::exists(o.prompt_spec), "prompt spec not found: " + o.prompt_spec);
    run.inputs.push_back(o.prompt_spec);
    std::ifstream in(o.prompt_spec);
    PromptSpec spec;
    try {
      const auto j = json::parse(in);
      spec = j.get<PromptSpec>();
      grammar = j.value("grammar", std::string{});
    } catch (const json::exception& e) {
      fail(Errc::invalid_input, "malformed prompt spec: " + std::string(e.what()));
    }
    std::vector<std::string> sentences;
    if (!o.sentence.empty()) sentences.push_back(o.sentence);
    if (!o.sentences.empty()) {
      require(fs::exists(o.sentences), "sentences file not found: " + o.sentences);
      run.inputs.push_back(o.sentences);
      std::ifstream sin(o.sentences);
      std::string line;
      while (std::getline(sin, line))
        if (!line.empty()) sentences.push_back(json::parse(line).get<std::string>());
    }
    require(!sentences.empty(), "classify needs --sentence or --sentences");
    for (std::size_t i = 0; i < sentences.size(); ++i)
      items.push_back({"sentence-" + std::to_string(i), spec, sentences[i], {}});
  }
  const auto backend = open_backend(g, b, run, grammar);

  std::ofstream words(out_path(g, run, "classified.jsonl"), std::ios::binary);
  std::ofstream tsv(out_path(g, run, "annotations.tsv"), std::ios::binary);
  std::ofstream marked(out_path(g, run, "annotations.txt"), std::ios::binary);
  tsv << "sentence\tindex\tword\tclass\n";
  std::size_t agree = 0, total = 0;
  for (const auto& it : items) {
    const auto cs = classify(*backend, it.prompt, it.sentence, cfg);
    for (std::size_t i = 0; i < cs.words.size(); ++i) {
      const auto& w = cs.words[i];
      json j = w;
      j["sentence"] = it.id;
      j["index"] = i;
      if (i < it.truth.size()) {
        j["truth_label"] = it.truth[i];
        ++total;
        agree += it.truth[i].is_template() == w.label.is_template();
      }
      words << j.dump() << '\n';
      tsv << it.id << '\t' << i << '\t' << json(w.text).dump() << '\t'
          << (w.label.is_template() ? "template" : "content") << '\n';
    }
    marked << it.id << '\t' << json(annotate(cs)).dump() << '\n';
  }
  json summary{{"sentences", items.size()}, {"threshold", cfg.threshold}};
  if (total > 0) {
    summary["labeled_words"] = total;
    summary["agreement"] = static_cast<double>(agree) / static_cast<double>(total);
  }
  write_text(out_path(g, run, "summary.json"), summary.dump(2) + "\n");
  if (total > 0) std::printf("agreement=%.6f words=%zu\n", summary["agreement"].get<double>(), total);
  else std::printf("sentences=%zu\n", items.size());
}

// serve-oracle

struct ServeOpts {
  std::string grammar = kConcatLettersName;
  std::string host = "127.0.0.1";
  int port = 8080;
};

void cmd_serve(const Global& g, const ServeOpts& o, const BackendOpts& b, Run& run,
               const std::vector<std::string>& argv) {
  run.config = {{"grammar", o.grammar}, {"host", o.host}, {"port", o.port}};
  BackendOpts ob = b;
  ob.backend = "oracle:" + o.grammar;
  auto backend = open_backend(g, ob, run, o.grammar);
  WireServer server(backend);
  write_manifest(g, run, argv);
  if (o.port == 0) {
    const int port = server.start(o.host, 0);
    std::printf("listening on http://%s:%d\n", o.host.c_str(), port);
    std::fflush(stdout);
    std::string line;
    while (std::getline(std::cin, line)) {
    }
    server.stop();
    return;
  }
  std::printf("listening on http://%s:%d\n", o.host.c_str(), o.port);
  std::fflush(stdout);
  server.run(o.host, o.port);
}

// check-hierarchy

struct HierarchyOpts {
  std::string grammar;
  std::string samples;
  std::string questions;
  std::string matrix;
};

void cmd_check_hierarchy(const Global& g, const HierarchyOpts& o, Run& run) {
  run.config = {{"grammar", o.grammar}, {"samples", o.samples}, {"questions", o.questions}, {"matrix", o.matrix}};
  require(!o.grammar.empty(), "check-hierarchy needs --grammar");
  if (fs::exists(o.grammar)) run.inputs.push_back(o.grammar);
  const auto gr = load_grammar(o.grammar, o.grammar.rfind("concat", 0) == 0 ? load_pool(g, run)
                                                                             : std::vector<std::string>{});
  const Oracle oracle(gr);
  json verdict{{"grammar", gr.name}, {"n_levels", gr.n_levels}};

  std::vector<LabeledSequence> samples;
  if (!o.samples.empty()) {
    require(fs::exists(o.samples), "samples file not found: " + o.samples);
    run.inputs.push_back(o.samples);
    for (const auto& r : read_jsonl<SequenceRecord>(o.samples)) samples.push_back(sequence_from_record(r));
  } else if (!o.questions.empty()) {
    require(fs::exists(o.questions), "questions file not found: " + o.questions);
    run.inputs.push_back(o.questions);
    std::ifstream in(o.questions);
    std::vector<QuestionValues> qs;
    try {
      qs = json::parse(in).get<std::vector<QuestionValues>>();
    } catch (const json::exception& e) {
      fail(Errc::invalid_input, "malformed questions file: " + std::string(e.what()));
    }
    for (const auto& q : qs) samples.push_back(oracle.generate(q));
  }
  if (!samples.empty()) {
    const auto r = check_label_consistency(samples, oracle);
    verdict["consistent"] = r.consistent;
    if (!r.reason.empty()) verdict["reason"] = r.reason;
    verdict["generation"] = check_hierarchical_generation(samples, oracle);
    if (r.consistent) {
      verdict["combined_answer"] = r.combined.text(r.combined.answer_begin());
    }
  }
  DependencyMatrix claimed = gr.dependency;
  if (!o.matrix.empty()) {
    try {
      claimed = DependencyMatrix(json::parse(o.matrix).get<std::vector<std::vector<int>>>());
    } catch (const json::exception& e) {
      fail(Errc::invalid_input, "malformed --matrix: " + std::string(e.what()));
    }
  }
  if (gr.n_levels > 1) {
    const auto sd = verify_sparse_dependency(gr, claimed);
    verdict["sparse_dependency"] = {{"holds", sd.holds}, {"false_zeros", sd.false_zeros}};
  }
  write_text(out_path(g, run, "verdict.json"), verdict.dump(2) + "\n");
  std::printf("%s\n", verdict.dump().c_str());
}

// augment

struct AugmentOpts {
  std::string dataset;
  std::string mode = "content";
  std::size_t k = 5;
  double p = 0.3;
  std::string synonyms;
};

void cmd_augment(const Global& g, const AugmentOpts& o, Run& run) {
  run.config = {{"dataset", o.dataset}, {"mode", o.mode}, {"k", o.k}, {"p", o.p}, {"synonyms", o.synonyms}};
  const auto ds = load_datasets(o.dataset, run);
  std::vector<SequenceRecord> corpus;
  if (o.mode == "content") {
    const auto& name = ds.front().grammar_name;
    const auto gr = load_grammar(name, name.rfind("concat", 0) == 0 ? load_pool(g, run) : std::vector<std::string>{});
    corpus = augment_content_replacement(ds, Oracle(gr), o.k, g.seed);
  } else if (o.mode == "synonym") {
    const auto path = o.synonyms.empty() ? std::string(TCPROBE_DATA_DIR) + "/synonyms.json" : o.synonyms;
    run.inputs.push_back(path);
    corpus = augment_random_synonym(ds, load_synonyms(path), o.p, g.seed);
  } else {
    fail(Errc::invalid_input, "unknown augmentation mode: " + o.mode);
  }
  write_jsonl(out_path(g, run, "corpus.jsonl"), corpus);
  std::printf("records=%zu\n", corpus.size());
}

// dump-grammar

void cmd_dump_grammar(const Global& g, const std::string& ref, Run& run) {
  run.config = {{"grammar", ref}};
  if (fs::exists(ref)) run.inputs.push_back(ref);
  const auto gr = load_grammar(ref, ref.rfind("concat", 0) == 0 ? load_pool(g, run) : std::vector<std::string>{});
  write_text(out_path(g, run, "grammar.json"), json(gr).dump(2) + "\n");
}

int exit_code(Errc c) {
  switch (c) {
    case Errc::invalid_input:
    case Errc::off_template:
    case Errc::unbound_role:
    case Errc::cap_exceeded:
    case Errc::unsupported:
      return 2;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Template-content structure probing toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config file (flags take precedence)");
  app.set_version_flag("--version", kVersion);

  Global g;
  auto add_global = [&](CLI::App* sub) {
    sub->add_option("--out", g.out, "Output directory")->envname("TCPROBE_OUT")->capture_default_str();
    sub->add_option("--seed", g.seed, "Random seed")->capture_default_str();
    sub->add_option("--words", g.words, "Word pool file (default: bundled 5000-word pool)");
    sub->add_flag("-v,--verbose", g.verbose, "Progress on stderr");
  };
  BackendOpts b;
  auto add_backend = [&](CLI::App* sub) {
    sub->add_option("--backend", b.backend, "oracle[:GRAMMAR] | remote:URL | noise:SEED[:position|:prefix]")
        ->envname("TCPROBE_BACKEND")
        ->capture_default_str();
    sub->add_option("--top-k", b.top_k, "Support size of returned distributions")->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub->add_option("--timeout", b.timeout, "Remote request timeout in seconds")->capture_default_str();
    sub->add_option("--retries", b.retries, "Remote retries after the first attempt")->capture_default_str();
  };

  GenOpts gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a content-replacement probe dataset");
  gen_cmd->add_option("kind", gen.kind, "concat-letters | concat-alt | chicken-rabbit | grammar")->required();
  gen_cmd->add_option("--grammar", gen.grammar, "Grammar name or JSON file (kind=grammar)");
  gen_cmd->add_option("--n", gen.n, "Number of samples")->capture_default_str();
  gen_cmd->add_option("--replacements", gen.replacements, "Replacements per sample")->capture_default_str();
  gen_cmd->add_option("--answers-per", gen.answers_per, "Also write k content-replaced pairs per sample");
  add_global(gen_cmd);

  ProbeOpts probe;
  auto* probe_cmd = app.add_subcommand("probe", "Measure per-position variance, DMV and AUC-ROC");
  probe_cmd->add_option("--dataset", probe.dataset, "Dataset JSONL from gen")->required();
  probe_cmd->add_flag("--all-positions", probe.all_positions, "Probe prompt and question words too");
  add_backend(probe_cmd);
  add_global(probe_cmd);

  ClassifyOpts cls;
  auto* cls_cmd = app.add_subcommand("classify", "Variance-threshold template/content classification");
  cls_cmd->add_option("--dataset", cls.dataset, "Classify each group's reference answer");
  cls_cmd->add_option("--prompt-spec", cls.prompt_spec, "Prompt spec JSON (reference + replacements)");
  cls_cmd->add_option("--sentence", cls.sentence, "Sentence to classify (with --prompt-spec)");
  cls_cmd->add_option("--sentences", cls.sentences, "JSONL file of sentence strings (with --prompt-spec)");
  cls_cmd->add_option("--profile", cls.profile, "concat | singleeq")->capture_default_str();
  cls_cmd->add_option("--threshold", cls.threshold, "Variance threshold in (0, 1); default from profile");
  cls_cmd->add_option("--filter-method", cls.filter_method, "renormalize | skip-redistribute");
  cls_cmd->add_option("--max-content-tokens", cls.max_content_tokens, "Runaway guard for content decoding");
  add_backend(cls_cmd);
  add_global(cls_cmd);

  ServeOpts serve;
  auto* serve_cmd = app.add_subcommand("serve-oracle", "Serve the oracle over the wire protocol");
  serve_cmd->add_option("--grammar", serve.grammar, "Grammar name or JSON file")->capture_default_str();
  serve_cmd->add_option("--host", serve.host)->capture_default_str();
  serve_cmd->add_option("--port", serve.port, "Port; 0 picks a free one and serves until stdin closes")
      ->capture_default_str();
  add_backend(serve_cmd);
  add_global(serve_cmd);

  HierarchyOpts hier;
  auto* hier_cmd = app.add_subcommand("check-hierarchy", "Label consistency, combined generation, sparse dependency");
  hier_cmd->add_option("--grammar", hier.grammar, "Grammar name or JSON file")->required();
  hier_cmd->add_option("--samples", hier.samples, "JSONL sequence records, one per level");
  hier_cmd->add_option("--questions", hier.questions, "JSON list of question assignments, one per level");
  hier_cmd->add_option("--matrix", hier.matrix, "Claimed dependency matrix as JSON, e.g. [[1],[0,1],[0,1,1]]");
  add_global(hier_cmd);

  AugmentOpts aug;
  auto* aug_cmd = app.add_subcommand("augment", "Build a content-replacement or synonym corpus");
  aug_cmd->add_option("--dataset", aug.dataset, "Dataset JSONL from gen")->required();
  aug_cmd->add_option("--mode", aug.mode, "content | synonym")->capture_default_str();
  aug_cmd->add_option("--k", aug.k, "Content replacements per sample")->capture_default_str();
  aug_cmd->add_option("--p", aug.p, "Synonym replacement probability")->capture_default_str();
  aug_cmd->add_option("--synonyms", aug.synonyms, "Synonym table JSON");
  add_global(aug_cmd);

  std::string dump_ref;
  auto* dump_cmd = app.add_subcommand("dump-grammar", "Write a grammar as JSON");
  dump_cmd->add_option("grammar", dump_ref, "Grammar name or JSON file")->required();
  add_global(dump_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  Run run;
  try {
    if (*gen_cmd) {
      run.command = "gen";
      cmd_gen(g, gen, run);
    } else if (*probe_cmd) {
      run.command = "probe";
      cmd_probe(g, probe, b, run);
    } else if (*cls_cmd) {
      run.command = "classify";
      cmd_classify(g, cls, b, run);
    } else if (*serve_cmd) {
      run.command = "serve-oracle";
      cmd_serve(g, serve, b, run, args);
      return 0;
    } else if (*hier_cmd) {
      run.command = "check-hierarchy";
      cmd_check_hierarchy(g, hier, run);
    } else if (*aug_cmd) {
      run.command = "augment";
      cmd_augment(g, aug, run);
    } else if (*dump_cmd) {
      run.command = "dump-grammar";
      cmd_dump_grammar(g, dump_ref, run);
    }
    write_manifest(g, run, args);
  } catch (const Error& e) {
    std::cerr << "tcprobe: error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "tcprobe: internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
