// Command-line entry point: generate-data, train, evaluate, sweep, serve, chat.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lookahead/checkpoint.hpp"
#include "lookahead/datagen.hpp"
#include "lookahead/evaluation.hpp"
#include "lookahead/service.hpp"
#include "lookahead/training.hpp"

using namespace lookahead;

namespace {

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoul(item));
  }
  if (out.empty()) throw std::invalid_argument("empty value list");
  return out;
}

GoalVector parse_bits(const std::string& text) {
  std::vector<std::uint8_t> bits;
  for (auto v : parse_list(text)) bits.push_back(static_cast<std::uint8_t>(v));
  return GoalVector(std::move(bits));
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

TrainConfig resolve_config(const std::string& path, std::optional<std::uint64_t> seed) {
  TrainConfig c = path.empty() ? TrainConfig{} : TrainConfig::load(path);
  if (seed) c.seed = *seed;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"look-ahead goal-oriented dialogue engine"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  std::string config_path;
  app.add_option("--seed", seed, "global random seed");
  app.add_option("--config", config_path, "training config (JSON, TrainConfig field names)");

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "synthesize a restaurant-reservation corpus");
  std::size_t gen_n = 1000, gen_max_turns = 20;
  std::string gen_out;
  gen->add_option("--n", gen_n, "number of dialogues")->capture_default_str();
  gen->add_option("--max-turns", gen_max_turns)->capture_default_str();
  gen->add_option("--out", gen_out, "corpus path (JSONL)")->required();

  // train
  auto* tr = app.add_subcommand("train", "train an agent");
  std::string tr_corpus, tr_out, tr_metrics;
  std::optional<std::size_t> tr_epochs;
  tr->add_option("--corpus", tr_corpus)->required();
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--metrics", tr_metrics, "metrics log (default <out>.metrics.jsonl)");
  tr->add_option("--epochs", tr_epochs, "override the config's epoch budget");
  bool tr_seq2seq = false;
  tr->add_flag("--seq2seq", tr_seq2seq, "train the Seq2Seq(goal) baseline");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "self-play an agent against a user simulator");
  std::string ev_agent, ev_sim, ev_out;
  std::size_t ev_n = 1000;
  ev->add_option("--agent", ev_agent)->required();
  ev->add_option("--simulator", ev_sim)->required();
  ev->add_option("--n", ev_n)->capture_default_str();
  ev->add_option("--out", ev_out, "report path (JSON)")->required();

  // sweep
  auto* sw = app.add_subcommand("sweep", "train and evaluate one agent per value");
  std::string sw_param, sw_values, sw_corpus, sw_sim, sw_out;
  std::size_t sw_n = 1000;
  sw->add_option("--param", sw_param, "K or hidden_dim")->required();
  sw->add_option("--values", sw_values, "comma-separated values")->required();
  sw->add_option("--corpus", sw_corpus)->required();
  sw->add_option("--simulator", sw_sim)->required();
  sw->add_option("--n", sw_n)->capture_default_str();
  sw->add_option("--out", sw_out, "table path (TSV)")->required();

  // serve
  auto* sv = app.add_subcommand("serve", "host chat sessions over HTTP");
  std::string sv_ckpt, sv_host = "127.0.0.1";
  int sv_port = 8080;
  sv->add_option("--checkpoint", sv_ckpt)->required();
  sv->add_option("--host", sv_host)->capture_default_str();
  sv->add_option("--port", sv_port)->capture_default_str();

  // chat
  auto* ch = app.add_subcommand("chat", "talk to an agent in the terminal");
  std::string ch_ckpt, ch_goals, ch_human, ch_save;
  ch->add_option("--checkpoint", ch_ckpt)->required();
  ch->add_option("--goals", ch_goals, "agent goal bits, e.g. 1,0,1,0,0,1 (default: sampled)");
  ch->add_option("--human-goals", ch_human, "your goal bits, recorded in the transcript");
  ch->add_option("--save", ch_save, "write the transcript as a corpus record");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto corpus = generate_corpus(gen_n, seed.value_or(1), GoalPool::standard(),
                                          gen_max_turns);
      save_corpus(corpus.sessions, gen_out);
      write_file(gen_out + ".stats.json", corpus.stats.to_json() + "\n");
      std::cout << corpus.stats.to_json() << "\n";
    } else if (*tr) {
      TrainConfig c = resolve_config(config_path, seed);
      if (tr_epochs) c.epochs = *tr_epochs;
      if (tr_seq2seq) {
        c.use_lookahead = false;
        c.use_state_loss = false;
      }
      const auto corpus = load_corpus(tr_corpus);
      std::ofstream metrics(tr_metrics.empty() ? tr_out + ".metrics.jsonl" : tr_metrics);
      TrainResult r = train(corpus, c, [&](const EpochMetrics& m) {
        metrics << m.to_json() << "\n" << std::flush;
        std::cerr << m.to_json() << "\n";
      });
      save_checkpoint({r.params, r.vocab}, tr_out);
      std::cerr << "best epoch " << r.best_epoch << ", saved " << tr_out << "\n";
    } else if (*ev) {
      const Agent agent = load_checkpoint(ev_agent);
      const Agent sim = load_checkpoint(ev_sim);
      const EvalReport report = evaluate(agent, sim, ev_n, seed.value_or(1));
      write_file(ev_out, report.to_json() + "\n");
      std::cout << report.to_json(false) << "\n";
    } else if (*sw) {
      TrainConfig c = resolve_config(config_path, seed);
      const auto corpus = load_corpus(sw_corpus);
      const Agent sim = load_checkpoint(sw_sim);
      const auto rows = sweep(corpus, c, sim, parse_sweep_param(sw_param), parse_list(sw_values),
                              sw_n, seed.value_or(1));
      write_file(sw_out, sweep_table(rows));
      std::cout << sweep_table(rows);
    } else if (*sv) {
      ChatService service(load_checkpoint(sv_ckpt), seed.value_or(1));
      HttpServer server(service);
      const int port = server.bind(sv_host, sv_port);
      std::cerr << "serving on http://" << sv_host << ":" << port << "\n";
      server.listen();
    } else if (*ch) {
      ChatService service(load_checkpoint(ch_ckpt), seed.value_or(1));
      GoalVector goals;
      if (ch_goals.empty()) {
        const auto pool = GoalPool::standard();
        std::mt19937_64 rng(seed.value_or(1));
        goals = pool.server[rng() % pool.server.size()];
      } else {
        goals = parse_bits(ch_goals);
      }
      std::optional<GoalVector> human;
      if (!ch_human.empty()) human = parse_bits(ch_human);
      std::cout << "agent goals:";
      const auto& labels = goal_labels(kServer);
      for (std::size_t i = 0; i < goals.size() && i < labels.size(); ++i) {
        if (goals[i]) std::cout << " [" << labels[i] << "]";
      }
      std::cout << "\ntype /quit to stop\n";
      const DialogueSession record = run_chat(service, goals, human, std::cin, std::cout);
      if (!ch_save.empty()) save_corpus({record}, ch_save);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
