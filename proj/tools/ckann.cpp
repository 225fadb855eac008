// Command-line driver: synthetic data generation, knowledge-embedding
// pretraining, model training, evaluation, prediction, and attention
// heatmaps. Exit codes: 0 ok, 2 input error, 3 consistency error, 4 numeric
// failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ckann/checkpoint.hpp"
#include "ckann/common.hpp"
#include "ckann/config.hpp"
#include "ckann/data.hpp"
#include "ckann/kg.hpp"
#include "ckann/metrics.hpp"
#include "ckann/model.hpp"
#include "ckann/trainer.hpp"
#include "ckann/transe.hpp"
#include "ckann/visualize.hpp"

namespace {

using namespace ckann;

std::uint64_t subsample_seed(const RunConfig& cfg) {
  return cfg.model.seed ^ fnv1a64("kg-subsample");
}

std::uint64_t run_config_hash(const RunConfig& cfg) {
  return fnv1a64(cfg.model.canonical_string() +
                 ";kg_keep_ratio=" + fmt_double(cfg.kg_keep_ratio));
}

Norm parse_norm(const std::string& s) {
  return s == "L1" ? Norm::L1 : Norm::L2;
}

KnowledgeGraph load_world_kg(const RunConfig& cfg, std::size_t* total_out) {
  require_file(cfg.kg_triples, "kg_triples");
  KnowledgeGraph kg = load_triples(cfg.kg_triples);
  if (total_out) *total_out = kg.triples().size();
  if (cfg.kg_keep_ratio < 1.0)
    kg = subsample(kg, cfg.kg_keep_ratio, subsample_seed(cfg));
  return kg;
}

void save_vocab(const WordTable& words, const std::string& path) {
  std::string out;
  for (const auto& t : words.tokens) out += t + "\n";
  write_file(path, out);
}

WordTable load_vocab(const std::string& path, std::size_t dim) {
  WordTable t;
  t.dim = dim;
  for (auto& line : read_lines(path)) {
    if (line.empty()) continue;
    t.index[line] = t.tokens.size();
    t.tokens.push_back(line);
  }
  t.matrix.assign(t.tokens.size() * dim, 0.0);
  return t;
}

struct World {
  KnowledgeGraph kg;
  std::size_t kg_total_triples = 0;
  AliasDictionary aliases;
  EmbeddingTable entities;
  WordTable words;
  IdfTable idf;
  std::set<std::string> stopwords;
  std::vector<QAInstance> train, dev, test;
};

// Shared loading for train/evaluate/predict/visualize. When vocab_path is
// nonempty the vocabulary is restored from it instead of rebuilt from the
// training split.
World load_world(const RunConfig& cfg, const std::string& vocab_path) {
  World w;
  w.kg = load_world_kg(cfg, &w.kg_total_triples);
  require_file(cfg.kg_aliases, "kg_aliases");
  w.aliases = load_aliases(cfg.kg_aliases, w.kg);
  require_file(cfg.entity_embeddings, "entity_embeddings");
  w.entities = load_table(cfg.entity_embeddings, &w.kg, cfg.model.d_k);
  require_file(cfg.train_data, "train_data");
  w.train = load_dataset(cfg.train_data, cfg.model.max_len);
  if (!cfg.dev_data.empty()) {
    require_file(cfg.dev_data, "dev_data");
    w.dev = load_dataset(cfg.dev_data, cfg.model.max_len);
  }
  if (!cfg.test_data.empty()) {
    require_file(cfg.test_data, "test_data");
    w.test = load_dataset(cfg.test_data, cfg.model.max_len);
  }
  if (!cfg.stopwords.empty()) {
    require_file(cfg.stopwords, "stopwords");
    w.stopwords = load_stopwords(cfg.stopwords);
  }
  w.idf = compute_idf(w.train);
  if (!vocab_path.empty()) {
    require_file(vocab_path, "vocab");
    w.words = load_vocab(vocab_path, cfg.model.d_w);
  } else {
    require_file(cfg.word_embeddings, "word_embeddings");
    auto vectors = load_word_vectors(cfg.word_embeddings);
    w.words = build_word_table(w.train, vectors, cfg.model.d_w, cfg.model.seed);
  }
  return w;
}

int cmd_gen_synthetic(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  SyntheticData data = generate_synthetic(cfg.synthetic);
  save_synthetic(data, cfg.output_dir);
  std::cout << "wrote synthetic benchmark to " << cfg.output_dir << ": "
            << data.train.size() << " train / " << data.dev.size() << " dev / "
            << data.test.size() << " test questions, "
            << data.kg.triples().size() << " triples\n";
  return 0;
}

int cmd_kge_train(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  KnowledgeGraph kg = load_world_kg(cfg, nullptr);
  TransEConfig tc;
  tc.dim = cfg.model.d_k;
  tc.margin = cfg.transe_margin;
  tc.norm = parse_norm(cfg.transe_norm);
  tc.learning_rate = cfg.transe_lr;
  tc.epochs = cfg.transe_epochs;
  tc.batch_size = cfg.transe_batch_size;
  tc.seed = cfg.model.seed;
  auto result = train_transe(kg, tc);
  std::string out_path = cfg.entity_embeddings.empty()
                             ? cfg.output_dir + "/entity_embeddings.txt"
                             : cfg.entity_embeddings;
  save_table(result.table, out_path);
  std::string trace;
  for (std::size_t i = 0; i < result.loss_trace.size(); ++i)
    trace += std::to_string(i) + " " + fmt_double(result.loss_trace[i]) + "\n";
  write_file(cfg.output_dir + "/kge_loss_trace.txt", trace);
  std::cout << "wrote " << out_path << " (" << kg.n_entities() << " entities, "
            << kg.n_relations() << " relations, dim " << tc.dim << ")\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  World w = load_world(cfg, "");
  save_vocab(w.words, cfg.output_dir + "/vocab.txt");

  Model model(cfg.model, w.words, w.entities);
  Pipeline pipeline(w.kg, w.aliases, w.entities, w.words, cfg.model);
  auto train_enc = pipeline.encode_split(w.train, w.idf, w.stopwords, "train");
  auto dev_enc = pipeline.encode_split(w.dev, w.idf, w.stopwords, "dev");

  std::string manifest = "config " + cfg.model.canonical_string() + "\n";
  manifest += "config_hash " + hex64(run_config_hash(cfg)) + "\n";
  manifest += "seed " + std::to_string(cfg.model.seed) + "\n";
  manifest += "kg_keep_ratio " + fmt_double(cfg.kg_keep_ratio) + "\n";
  manifest += "kg_triples_total " + std::to_string(w.kg_total_triples) + "\n";
  manifest += "kg_triples_used " + std::to_string(w.kg.triples().size()) + "\n";
  manifest += "dataset_hash_train " + hex64(fnv1a64(read_file(cfg.train_data))) + "\n";
  if (!cfg.dev_data.empty())
    manifest += "dataset_hash_dev " + hex64(fnv1a64(read_file(cfg.dev_data))) + "\n";

  TrainOptions opts;
  opts.epochs = cfg.epochs;
  opts.patience = cfg.patience;
  double best_so_far = -1.0;
  opts.on_epoch = [&](std::size_t epoch, double loss, double dev_map) {
    best_so_far = std::max(best_so_far, dev_map);
    manifest += "epoch " + std::to_string(epoch) + " train_loss " +
                fmt_double(loss) + " dev_map " + fmt_double(dev_map) +
                " best_dev_map " + fmt_double(best_so_far) + "\n";
    std::cout << "epoch " << epoch << " train_loss " << loss << " dev_map "
              << dev_map << "\n";
  };
  TrainResult result = train_model(model, train_enc, dev_enc, opts);
  manifest += "best_epoch " + std::to_string(result.best_epoch) +
              " best_dev_map " + fmt_double(result.best_dev_map) + "\n";

  restore_params(model.params(), result.best_params);
  save_checkpoint(model.params(), run_config_hash(cfg),
                  cfg.output_dir + "/checkpoint");
  write_file(cfg.output_dir + "/run_manifest.txt", manifest);
  std::cout << "best dev MAP " << result.best_dev_map << " at epoch "
            << result.best_epoch << "; checkpoint written to "
            << cfg.output_dir << "/checkpoint.{manifest,params}\n";
  return 0;
}

std::vector<QAInstance>* pick_split(World& w, const std::string& split) {
  if (split == "train") return &w.train;
  if (split == "dev") return &w.dev;
  if (split == "test") return &w.test;
  throw ConfigError("split must be train, dev, or test");
}

int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint,
                 const std::string& split) {
  std::filesystem::create_directories(cfg.output_dir);
  std::string vocab = std::filesystem::path(checkpoint).parent_path().string();
  vocab = vocab.empty() ? "vocab.txt" : vocab + "/vocab.txt";
  World w = load_world(cfg, vocab);
  Model model(cfg.model, w.words, w.entities);
  load_checkpoint(model.params(), run_config_hash(cfg), checkpoint);

  Pipeline pipeline(w.kg, w.aliases, w.entities, w.words, cfg.model);
  auto* insts = pick_split(w, split);
  auto enc = pipeline.encode_split(*insts, w.idf, w.stopwords, split);
  auto rankings = rank_split(model, enc);
  EvalReport report = aggregate_rankings(rankings);
  write_file(cfg.output_dir + "/eval_report_" + split + ".txt",
             format_report(report));
  write_file(cfg.output_dir + "/run_file_" + split + ".tsv",
             format_run_file(rankings));
  std::cout << format_report(report);
  return 0;
}

int cmd_predict(const RunConfig& cfg, const std::string& checkpoint,
                const std::string& input) {
  std::filesystem::create_directories(cfg.output_dir);
  std::string vocab = std::filesystem::path(checkpoint).parent_path().string();
  vocab = vocab.empty() ? "vocab.txt" : vocab + "/vocab.txt";
  World w = load_world(cfg, vocab);
  Model model(cfg.model, w.words, w.entities);
  load_checkpoint(model.params(), run_config_hash(cfg), checkpoint);

  require_file(input, "predict input");
  auto insts = load_dataset(input, cfg.model.max_len, /*require_labels=*/false);
  Pipeline pipeline(w.kg, w.aliases, w.entities, w.words, cfg.model);
  auto enc = pipeline.encode_split(insts, w.idf, w.stopwords, "predict");
  auto rankings = rank_split(model, enc);
  write_file(cfg.output_dir + "/predictions.tsv", format_run_file(rankings));
  std::cout << "wrote " << cfg.output_dir << "/predictions.tsv\n";
  return 0;
}

int cmd_visualize(const RunConfig& cfg, const std::string& checkpoint,
                  const std::string& split, const std::string& qid) {
  std::filesystem::create_directories(cfg.output_dir);
  std::string vocab = std::filesystem::path(checkpoint).parent_path().string();
  vocab = vocab.empty() ? "vocab.txt" : vocab + "/vocab.txt";
  World w = load_world(cfg, vocab);
  Model model(cfg.model, w.words, w.entities);
  load_checkpoint(model.params(), run_config_hash(cfg), checkpoint);

  Pipeline pipeline(w.kg, w.aliases, w.entities, w.words, cfg.model);
  auto* insts = pick_split(w, split);
  const QAInstance* found = nullptr;
  for (const auto& inst : *insts)
    if (inst.qid == qid) {
      found = &inst;
      break;
    }
  if (!found) throw UnknownQid(qid);
  EncodedQuestion q = pipeline.encode_instance(*found, w.idf, w.stopwords);
  std::vector<ForwardOutput> outputs;
  for (std::size_t c = 0; c < q.candidates.size(); ++c)
    outputs.push_back(
        model.forward(q.question, q.candidates[c], q.x_feats[c], false));
  std::string html = render_heatmap(qid, cfg.model.variant, q, outputs);
  std::string path = cfg.output_dir + "/attention_" + qid + ".html";
  write_file(path, html);
  std::cout << "wrote " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge-aware answer selection"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "JSON config file");
  app.add_option("--set", overrides, "override config keys (key=value)");

  auto* gen = app.add_subcommand("gen-synthetic", "generate a planted-signal benchmark");
  auto* kge = app.add_subcommand("kge-train", "pretrain entity/relation embeddings");
  auto* train = app.add_subcommand("train", "train an answer-selection model");
  auto* eval = app.add_subcommand("evaluate", "score a labeled split");
  auto* predict = app.add_subcommand("predict", "score an unlabeled file");
  auto* viz = app.add_subcommand("visualize", "render attention heatmaps");

  std::string checkpoint = "checkpoint";
  std::string split = "test";
  std::string input;
  std::string qid;
  eval->add_option("--checkpoint", checkpoint, "checkpoint stem");
  eval->add_option("--split", split, "train|dev|test");
  predict->add_option("--checkpoint", checkpoint, "checkpoint stem");
  predict->add_option("--input", input, "unlabeled dataset file")->required();
  viz->add_option("--checkpoint", checkpoint, "checkpoint stem");
  viz->add_option("--split", split, "train|dev|test");
  viz->add_option("--qid", qid, "question id to render")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ckann::RunConfig cfg = ckann::load_run_config(config_path, overrides);
    if (gen->parsed()) return cmd_gen_synthetic(cfg);
    if (kge->parsed()) return cmd_kge_train(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (eval->parsed()) return cmd_evaluate(cfg, checkpoint, split);
    if (predict->parsed()) return cmd_predict(cfg, checkpoint, input);
    if (viz->parsed()) return cmd_visualize(cfg, checkpoint, split, qid);
  } catch (const ckann::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ckann::ErrorKind::Input: return 2;
      case ckann::ErrorKind::Consistency: return 3;
      case ckann::ErrorKind::Numeric: return 4;
    }
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
