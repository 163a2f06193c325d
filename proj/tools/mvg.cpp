// mvg: command-line front end. Errors go to stderr as one JSON line,
// {"error": <kind>, "message": <text>}, with exit status 2 for usage and
// configuration errors and 1 otherwise.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mvgvae/cli.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "top-level seed (overrides the config file)");
  cmd->add_option("--set", c.overrides, "override one config key, e.g. train.epochs=5")->take_all();
  if (!out_help.empty()) cmd->add_option("--out", c.out, out_help)->required();
}

mvg::RunConfig resolve(const Common& c) { return mvg::resolve_run_config(c.config, c.overrides, c.seed); }

int fail(const char* kind, const std::string& message, int code) {
  std::cerr << nlohmann::json({{"error", kind}, {"message", message}}).dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilingual variational generation: data, training, controlled generation and evaluation"};
  app.require_subcommand(1);
  std::vector<Common> common(9);

  auto* gen_synth = app.add_subcommand("gen-synth", "write a synthetic bitext world with triples, probes and gold labels");
  add_common(gen_synth, common[0], "output directory");

  std::string corpus;
  std::optional<int> merges;
  auto* bpe = app.add_subcommand("bpe", "learn a joint subword model from a bitext TSV");
  add_common(bpe, common[1], "model file");
  bpe->add_option("--corpus", corpus, "bitext TSV")->required()->check(CLI::ExistingFile);
  bpe->add_option("--merges", merges, "number of merges (overrides data.bpe_merges)");

  mvg::TrainInputs train_in;
  auto* train = app.add_subcommand("train", "train a model; writes checkpoints and a metrics CSV");
  add_common(train, common[2], "output directory");
  train->add_option("--corpus", train_in.corpus, "bitext TSV")->required()->check(CLI::ExistingFile);
  train->add_option("--dev", train_in.dev, "dev triples (JSON lines) for checkpoint selection")->check(CLI::ExistingFile);
  train->add_option("--bpe", train_in.bpe, "subword model; learned from the corpus when omitted")->check(CLI::ExistingFile);
  train->add_option("--resume", train_in.resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  std::string checkpoint;
  std::vector<std::string> triples, hyps_out;
  std::optional<int> beam, max_len;
  auto* generate = app.add_subcommand("generate", "controlled generation for evaluation triples");
  add_common(generate, common[3], "");
  generate->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  generate->add_option("--triples", triples, "triples (JSON lines); repeatable")->required()->check(CLI::ExistingFile);
  generate->add_option("--out", hyps_out, "hypotheses (JSON lines), one per --triples")->required();
  generate->add_option("--beam", beam, "beam width (overrides generate.beam)");
  generate->add_option("--max-len", max_len, "maximum output subwords (overrides generate.max_len)");

  mvg::EvalInputs eval_in;
  auto add_eval = [&](const char* name, const char* help, Common& c) {
    auto* cmd = app.add_subcommand(name, help);
    add_common(cmd, c, "report prefix; writes <prefix>.json and <prefix>.csv");
    cmd->add_option("--hyps", eval_in.hypotheses, "hypotheses (JSON lines)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--triples", eval_in.triples, "triples (JSON lines)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--bank", eval_in.bank, "target-language parse bank")->check(CLI::ExistingFile);
    cmd->add_option("--world", eval_in.world, "world config used as the parser")->check(CLI::ExistingFile);
    cmd->add_flag("--char", eval_in.character, "character-level BLEU and ROUGE");
    return cmd;
  };
  auto* eval_para = add_eval("eval-para", "score paraphrase outputs: BLEU, ROUGE, ST-r, ST-s", common[4]);
  auto* eval_mt = add_eval("eval-mt", "score translation outputs: BLEU, ROUGE, ST-r, ST-s", common[5]);

  std::string pairs, lang, bank, gold;
  auto* eval_sts = app.add_subcommand("eval-sts", "semantic similarity probe");
  add_common(eval_sts, common[6], "report prefix");
  eval_sts->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  eval_sts->add_option("--pairs", pairs, "TSV: sentence, sentence, gold score")->required()->check(CLI::ExistingFile);
  eval_sts->add_option("--lang", lang, "language of the pairs")->required();

  auto* eval_syn = app.add_subcommand("eval-syn", "syntactic retrieval probes over a parse bank");
  add_common(eval_syn, common[7], "report prefix");
  eval_syn->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  eval_syn->add_option("--bank", bank, "parse bank")->required()->check(CLI::ExistingFile);
  eval_syn->add_option("--lang", lang, "language of the bank")->required();
  eval_syn->add_option("--gold", gold, "frame and template labels aligned with the bank; adds frame retrieval")
      ->check(CLI::ExistingFile);

  std::string queries, pool, variable = "sem";
  std::size_t k = 10;
  auto* nn = app.add_subcommand("nn", "nearest neighbours by one latent variable");
  add_common(nn, common[8], "report prefix");
  nn->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  nn->add_option("--queries", queries, "query sentences, one per line")->required()->check(CLI::ExistingFile);
  nn->add_option("--pool", pool, "candidate sentences, one per line")->required()->check(CLI::ExistingFile);
  nn->add_option("--lang", lang, "language of queries and pool")->required();
  nn->add_option("--variable", variable, "sem or syn");
  nn->add_option("-k", k, "neighbours per query");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return fail("usage", e.what(), 2);
  }

  try {
    if (gen_synth->parsed()) {
      mvg::cmd_gen_synth(resolve(common[0]), common[0].out);
    } else if (bpe->parsed()) {
      auto c = common[1];
      if (merges) c.overrides.push_back("data.bpe_merges=" + std::to_string(*merges));
      mvg::cmd_bpe(resolve(c), corpus, c.out);
    } else if (train->parsed()) {
      mvg::cmd_train(resolve(common[2]), train_in, common[2].out);
    } else if (generate->parsed()) {
      auto c = common[3];
      if (beam) c.overrides.push_back("generate.beam=" + std::to_string(*beam));
      if (max_len) c.overrides.push_back("generate.max_len=" + std::to_string(*max_len));
      mvg::cmd_generate(resolve(c), checkpoint, triples, hyps_out);
    } else if (eval_para->parsed()) {
      mvg::cmd_eval_generation(resolve(common[4]), mvg::TaskKind::paraphrase, eval_in, common[4].out);
    } else if (eval_mt->parsed()) {
      mvg::cmd_eval_generation(resolve(common[5]), mvg::TaskKind::translation, eval_in, common[5].out);
    } else if (eval_sts->parsed()) {
      mvg::cmd_eval_sts(resolve(common[6]), checkpoint, pairs, lang, common[6].out);
    } else if (eval_syn->parsed()) {
      mvg::cmd_eval_syn(resolve(common[7]), checkpoint, bank, lang, gold, common[7].out);
    } else if (nn->parsed()) {
      mvg::cmd_nn(resolve(common[8]), checkpoint, queries, pool, lang, mvg::parse_variable(variable), k, common[8].out);
    }
  } catch (const mvg::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const mvg::ParseError& e) {
    return fail("parse", e.what(), 1);
  } catch (const mvg::NumericError& e) {
    return fail("numeric", e.what(), 1);
  } catch (const mvg::Error& e) {
    return fail("runtime", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
