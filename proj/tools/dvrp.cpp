// Command-line front end: request generation, simulation, pre-training,
// fine-tuning, and the evaluation matrix. All outputs land in --out together
// with a manifest describing the run.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dvrp/anytime.hpp"
#include "dvrp/insertion.hpp"
#include "dvrp/scenario.hpp"
#include "dvrp/sim.hpp"
#include "dvrp/valuefn.hpp"

namespace {

constexpr const char* kVersion = "dvrp-1.0.0";

// Exit codes: 0 success, 2 usage/config, 3 data/validation, 4 integrity.
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitIntegrity = 4;

std::string iso_timestamp() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

struct ManifestWriter {
    nlohmann::json j;

    ManifestWriter(const std::string& command, const std::string& config_path,
                   const std::vector<std::uint64_t>& seeds, const std::string& out_dir) {
        j["command"] = command;
        j["config"] = config_path;
        j["seeds"] = seeds;
        j["output_dir"] = out_dir;
        j["version"] = kVersion;
        j["started_at"] = iso_timestamp();
    }

    void finish(const std::string& out_dir) {
        j["finished_at"] = iso_timestamp();
        std::ofstream out(std::filesystem::path(out_dir) / "manifest.json");
        out << j.dump(1) << "\n";
    }
};

void ensure_out_dir(const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw dvrp::ConfigError("cannot create output directory: " + out_dir);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw dvrp::ConfigError("bad seed: " + item);
        }
    }
    if (out.empty()) throw dvrp::ConfigError("empty seed list");
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

dvrp::ValueFunction load_or_default_model(const std::string& path) {
    if (path.empty()) throw dvrp::ConfigError("this wiring needs --model");
    return dvrp::ValueFunction::load(path);
}

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    int parallel = 1;
    bool trace = false;
};

dvrp::EpisodeOptions make_episode_options(double ips, std::size_t fixed, bool use_fixed,
                                          bool realtime) {
    dvrp::EpisodeOptions opt;
    if (realtime)
        opt.budget.mode = dvrp::GapBudget::Mode::realtime;
    else if (use_fixed)
        opt.budget.mode = dvrp::GapBudget::Mode::fixed;
    else
        opt.budget.mode = dvrp::GapBudget::Mode::scaled;
    opt.budget.iterations_per_second = ips;
    opt.budget.fixed_iterations = fixed;
    return opt;
}

int cmd_gen_requests(const CommonArgs& common) {
    auto cfg = dvrp::load_scenario(common.config_path);
    auto backend = dvrp::make_backend(cfg);
    ensure_out_dir(common.out_dir);
    ManifestWriter manifest("gen-requests", common.config_path, {common.seed}, common.out_dir);
    auto requests = dvrp::generate_requests(cfg, backend, common.seed);
    dvrp::write_requests_csv(requests,
                             (std::filesystem::path(common.out_dir) / "requests.csv").string(),
                             cfg.backend == dvrp::TravelTimeBackend::Kind::graph);
    manifest.j["requests"] = requests.size();
    manifest.finish(common.out_dir);
    std::cout << "wrote " << requests.size() << " requests to " << common.out_dir
              << "/requests.csv\n";
    return 0;
}

int cmd_simulate(const CommonArgs& common, const std::string& requests_path,
                 const std::string& acceptance, const std::string& objective,
                 const std::string& model_path, double ips, std::size_t fixed_iterations,
                 bool realtime, bool measure_latency) {
    auto cfg = dvrp::load_scenario(common.config_path);
    auto backend = dvrp::make_backend(cfg);
    ensure_out_dir(common.out_dir);
    ManifestWriter manifest("simulate", common.config_path, {common.seed}, common.out_dir);

    std::vector<dvrp::Request> requests =
        requests_path.empty() ? dvrp::generate_requests(cfg, backend, common.seed)
                              : dvrp::read_requests_csv(requests_path);

    dvrp::ValueFunction heuristic = dvrp::ValueFunction::heuristic();
    dvrp::ValueFunction learned;
    dvrp::PolicyWiring wiring;
    wiring.acceptance_mode = acceptance == "always" ? dvrp::AcceptanceMode::always_accept
                                                    : dvrp::AcceptanceMode::accept_reject;
    if (objective == "heuristic") {
        wiring.insertion_value = &heuristic;
        wiring.anytime_value = &heuristic;
    } else {
        learned = load_or_default_model(model_path);
        wiring.insertion_value = &learned;
        wiring.anytime_value = &learned;
    }

    auto opt = make_episode_options(ips, fixed_iterations, fixed_iterations > 0, realtime);
    opt.seed = dvrp::split_seed(common.seed, 0xE7A1);
    std::ofstream trace_file;
    if (common.trace) {
        trace_file.open(std::filesystem::path(common.out_dir) / "trace.csv");
        opt.trace = &trace_file;
    }

    auto report =
        dvrp::run_episode(backend, dvrp::make_vehicles(cfg), requests, cfg.episode_length,
                          wiring, opt);

    std::vector<dvrp::MatrixRow> rows(1);
    if (objective == "heuristic" && acceptance == "always")
        rows[0].setting = "A";
    else if (objective == "learned" && acceptance == "accept-reject")
        rows[0].setting = "Our";
    else
        rows[0].setting = objective + "-" + acceptance;
    rows[0].seed = common.seed;
    rows[0].report = report;
    if (!measure_latency) {
        rows[0].report.latency_ms_p50 = 0.0;
        rows[0].report.latency_ms_p95 = 0.0;
    }
    std::ofstream out(std::filesystem::path(common.out_dir) / "report.csv");
    dvrp::write_metrics_csv(rows, out);

    manifest.j["arrived"] = report.arrived;
    manifest.j["accepted"] = report.accepted;
    manifest.j["latency_ms_p95_measured"] = report.latency_ms_p95;
    manifest.finish(common.out_dir);
    std::cout << "service_rate=" << report.service_rate
              << " accepted=" << report.accepted << "/" << report.arrived << "\n";
    return 0;
}

int cmd_pretrain(const CommonArgs& common, const std::string& experiences_path,
                 std::size_t episodes, const std::vector<std::size_t>& hidden, double lr,
                 std::size_t batch, std::size_t epochs, std::size_t k, double gamma,
                 double ips) {
    auto cfg = dvrp::load_scenario(common.config_path);
    auto backend = dvrp::make_backend(cfg);
    ensure_out_dir(common.out_dir);
    ManifestWriter manifest("pretrain", common.config_path, {common.seed}, common.out_dir);

    dvrp::FeatureConfig fcfg;  // idle + spatio-temporal defaults
    dvrp::ExperienceBuffer buffer;
    if (!experiences_path.empty()) {
        buffer = dvrp::ExperienceBuffer::load(experiences_path);
        if (buffer.size() == 0) throw dvrp::ValidationError("experience log is empty");
        fcfg.feature_set = dvrp::FeatureSet::idle_spatiotemporal;
        if (buffer[0].features.size() != fcfg.length())
            throw dvrp::ValidationError("experience feature length does not match configuration");
    } else {
        dvrp::ValueFunction heuristic = dvrp::ValueFunction::heuristic();
        dvrp::PolicyWiring wiring;
        wiring.insertion_value = &heuristic;
        wiring.anytime_value = &heuristic;
        wiring.acceptance_mode = dvrp::AcceptanceMode::always_accept;
        auto opt = make_episode_options(ips, 0, false, false);
        buffer = dvrp::collect_experiences(cfg, backend, wiring, fcfg, episodes, k, gamma,
                                           common.seed, opt);
        buffer.save((std::filesystem::path(common.out_dir) / "experiences.jsonl").string());
    }

    std::vector<std::size_t> sizes;
    sizes.push_back(fcfg.length());
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    dvrp::Rng init_rng(dvrp::split_seed(common.seed, 0x11));
    dvrp::Mlp net(sizes, 0.1, init_rng);
    dvrp::ValueFunction vf = dvrp::ValueFunction::learned(fcfg, std::move(net));

    dvrp::PretrainOptions popt;
    popt.learning_rate = lr;
    popt.batch_size = batch;
    popt.max_epochs = epochs;
    popt.seed = dvrp::split_seed(common.seed, 0x22);
    auto result = dvrp::pretrain(buffer, vf, popt);

    vf.save((std::filesystem::path(common.out_dir) / "model.json").string());
    manifest.j["experiences"] = buffer.size();
    manifest.j["holdout_r2"] = result.holdout_r2;
    manifest.j["holdout_mse"] = result.holdout_mse;
    manifest.j["epochs_run"] = result.epochs_run;
    manifest.j["train_count"] = result.train_count;
    manifest.j["holdout_count"] = result.holdout_count;
    manifest.finish(common.out_dir);
    std::cout << "experiences=" << buffer.size() << " holdout_r2=" << result.holdout_r2
              << " epochs=" << result.epochs_run << " train=" << result.train_count
              << " holdout=" << result.holdout_count << "\n";
    return 0;
}

int cmd_train(const CommonArgs& common, const std::string& model_in, std::size_t episodes,
              double lr, std::size_t batch, double gamma, double ips) {
    auto cfg = dvrp::load_scenario(common.config_path);
    auto backend = dvrp::make_backend(cfg);
    ensure_out_dir(common.out_dir);
    ManifestWriter manifest("train", common.config_path, {common.seed}, common.out_dir);

    dvrp::ValueFunction vf = load_or_default_model(model_in);
    if (vf.kind() != dvrp::ValueFunction::Kind::learned)
        throw dvrp::ConfigError("train requires a learned model");
    dvrp::FeatureConfig fcfg = vf.config();

    std::ofstream loss_log(std::filesystem::path(common.out_dir) / "loss.csv");
    loss_log << "update,loss\n";

    if (episodes > 0) {
        dvrp::QTrainer trainer(vf, gamma, lr);
        dvrp::ExperienceBuffer replay(200'000);
        dvrp::Rng sample_rng(dvrp::split_seed(common.seed, 0x33));
        auto vehicles = dvrp::make_vehicles(cfg);
        std::size_t update = 0;

        for (std::size_t ep = 0; ep < episodes; ++ep) {
            std::uint64_t ep_seed = dvrp::split_seed(common.seed, ep + 1);
            auto requests = dvrp::generate_requests(cfg, backend, ep_seed);
            dvrp::PolicyWiring wiring;
            wiring.insertion_value = &vf;
            wiring.anytime_value = &vf;
            wiring.acceptance_mode = dvrp::AcceptanceMode::accept_reject;
            wiring.gamma = gamma;
            auto opt = make_episode_options(ips, 0, false, false);
            opt.seed = dvrp::split_seed(ep_seed, 0xA11);
            opt.record_config = &fcfg;
            std::vector<dvrp::Experience> log;
            dvrp::run_episode(backend, vehicles, requests, cfg.episode_length, wiring, opt,
                              &log);
            for (auto& e : log) replay.push(std::move(e));

            // a few replay updates per episode keeps compute bounded
            std::size_t updates_per_episode = std::max<std::size_t>(1, log.size() / 8);
            for (std::size_t u = 0; u < updates_per_episode; ++u) {
                std::vector<dvrp::Experience> minibatch;
                std::size_t take = std::min(batch, replay.size());
                minibatch.reserve(take);
                for (std::size_t i = 0; i < take; ++i)
                    minibatch.push_back(replay[sample_rng.below(replay.size())]);
                double loss = trainer.q_update(minibatch);
                loss_log << update++ << ',' << dvrp::detail::format_double(loss) << '\n';
            }
        }
        manifest.j["q_updates"] = update;
    }

    vf.save((std::filesystem::path(common.out_dir) / "model.json").string());
    manifest.j["episodes"] = episodes;
    manifest.finish(common.out_dir);
    std::cout << "episodes=" << episodes << " model=" << common.out_dir << "/model.json\n";
    return 0;
}

int cmd_evaluate(const CommonArgs& common, const std::string& settings_arg,
                 const std::string& seeds_arg, const std::string& model_path,
                 const std::string& budget_sweep, double ips, std::size_t fixed_iterations,
                 double gamma, bool measure_latency) {
    auto cfg = dvrp::load_scenario(common.config_path);
    auto backend = dvrp::make_backend(cfg);
    ensure_out_dir(common.out_dir);

    std::vector<dvrp::AblationSetting> settings;
    {
        std::stringstream ss(settings_arg);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) settings.push_back(dvrp::parse_setting(item));
    }
    if (settings.empty()) throw dvrp::ConfigError("no settings given");
    std::sort(settings.begin(), settings.end());
    settings.erase(std::unique(settings.begin(), settings.end()), settings.end());

    auto seeds = seeds_arg.empty() ? std::vector<std::uint64_t>{common.seed}
                                   : parse_seed_list(seeds_arg);
    ManifestWriter manifest("evaluate", common.config_path, seeds, common.out_dir);

    dvrp::ValueFunction heuristic = dvrp::ValueFunction::heuristic();
    dvrp::ValueFunction learned;
    bool needs_model = false;
    for (auto s : settings)
        if (s != dvrp::AblationSetting::a) needs_model = true;
    if (needs_model) learned = load_or_default_model(model_path);

    // budget blocks: default is the single configured budget; a sweep runs
    // one block per entry ("full" = gap-scaled budget)
    struct Block {
        std::string label;
        dvrp::EpisodeOptions opt;
    };
    std::vector<Block> blocks;
    if (budget_sweep.empty()) {
        blocks.push_back(
            {"", make_episode_options(ips, fixed_iterations, fixed_iterations > 0, false)});
    } else {
        std::stringstream ss(budget_sweep);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            if (item == "full") {
                blocks.push_back({"full", make_episode_options(ips, 0, false, false)});
            } else {
                std::size_t iters = 0;
                try {
                    iters = std::stoull(item);
                } catch (const std::exception&) {
                    throw dvrp::ConfigError("bad budget entry: " + item);
                }
                blocks.push_back({item, make_episode_options(ips, iters, true, false)});
            }
        }
        if (blocks.empty()) throw dvrp::ConfigError("empty budget sweep");
    }

    std::ofstream out(std::filesystem::path(common.out_dir) / "metrics.csv");
    bool sweep = !budget_sweep.empty();
    if (sweep) out << "budget,";
    bool wrote_header = false;

    for (const auto& block : blocks) {
        // episodes are independent; --parallel N shards seeds across threads
        std::vector<dvrp::MatrixRow> rows(seeds.size() * settings.size());
        auto run_seed = [&](std::size_t si) {
            auto requests = dvrp::generate_requests(cfg, backend, seeds[si]);
            auto vehicles = dvrp::make_vehicles(cfg);
            for (std::size_t gi = 0; gi < settings.size(); ++gi) {
                auto wiring = dvrp::make_wiring(settings[gi], heuristic, learned, gamma);
                dvrp::EpisodeOptions opt = block.opt;
                opt.seed = dvrp::split_seed(seeds[si], 0xE7A1);
                dvrp::MatrixRow row;
                row.setting = dvrp::to_string(settings[gi]);
                row.seed = seeds[si];
                row.report = dvrp::run_episode(backend, vehicles, requests,
                                               cfg.episode_length, wiring, opt);
                if (!measure_latency) {
                    row.report.latency_ms_p50 = 0.0;
                    row.report.latency_ms_p95 = 0.0;
                }
                rows[si * settings.size() + gi] = row;
            }
        };
        if (common.parallel > 1 && seeds.size() > 1) {
            std::atomic<std::size_t> next{0};
            std::vector<std::thread> pool;
            int n_threads = std::min<int>(common.parallel, static_cast<int>(seeds.size()));
            for (int t = 0; t < n_threads; ++t)
                pool.emplace_back([&]() {
                    for (;;) {
                        std::size_t si = next.fetch_add(1);
                        if (si >= seeds.size()) return;
                        run_seed(si);
                    }
                });
            for (auto& th : pool) th.join();
        } else {
            for (std::size_t si = 0; si < seeds.size(); ++si) run_seed(si);
        }

        // deterministic output order: seed, then setting
        std::ostringstream body;
        dvrp::write_metrics_csv(rows, body);
        std::string text = body.str();
        std::size_t header_end = text.find('\n') + 1;
        if (!wrote_header) {
            out << text.substr(0, header_end);
            wrote_header = true;
        }
        std::string data = text.substr(header_end);
        if (sweep) {
            std::stringstream lines(data);
            std::string line;
            while (std::getline(lines, line))
                if (!line.empty()) out << block.label << ',' << line << '\n';
        } else {
            out << data;
        }
    }

    manifest.finish(common.out_dir);
    std::cout << "wrote " << common.out_dir << "/metrics.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic ride-request routing: simulation, training, evaluation"};
    app.require_subcommand(1);

    CommonArgs common;
    app.add_option("--config", common.config_path, "scenario config file")->required();
    app.add_option("--seed", common.seed, "master random seed");
    app.add_option("--out", common.out_dir, "output directory");
    app.add_option("--parallel", common.parallel, "worker threads for evaluate")
        ->check(CLI::PositiveNumber);
    app.add_flag("--trace", common.trace, "emit per-epoch trace CSV");

    auto* gen = app.add_subcommand("gen-requests", "sample a request stream to CSV");

    auto* sim = app.add_subcommand("simulate", "run one episode and report metrics");
    std::string requests_path, acceptance = "always", objective = "heuristic", model_path;
    double ips = 100.0, gamma = 0.9;
    std::size_t fixed_iterations = 0;
    bool realtime = false, measure_latency = false;
    sim->add_option("--requests", requests_path, "request CSV (default: generate from seed)");
    sim->add_option("--acceptance", acceptance, "always | accept-reject")
        ->check(CLI::IsMember({"always", "accept-reject"}));
    sim->add_option("--objective", objective, "heuristic | learned")
        ->check(CLI::IsMember({"heuristic", "learned"}));
    sim->add_option("--model", model_path, "model file for the learned objective");
    sim->add_option("--ips", ips, "optimizer iterations per simulated second");
    sim->add_option("--fixed-iterations", fixed_iterations, "constant optimizer budget per gap");
    sim->add_flag("--realtime", realtime, "spend the actual wall-clock gap optimizing");
    sim->add_flag("--measure-latency", measure_latency,
                  "report wall-clock confirmation latency in the CSV (non-reproducible)");

    auto* pre = app.add_subcommand("pretrain", "supervised pre-training of the value network");
    std::string experiences_path;
    std::size_t episodes = 50, batch = 1024, epochs = 200, mc_k = 20;
    std::vector<std::size_t> hidden{64, 128, 128};
    double lr = 1e-3;
    pre->add_option("--experiences", experiences_path, "existing experience log (JSONL)");
    pre->add_option("--episodes", episodes, "episodes to simulate when collecting");
    pre->add_option("--hidden", hidden, "hidden layer sizes");
    pre->add_option("--lr", lr, "learning rate");
    pre->add_option("--batch", batch, "mini-batch size");
    pre->add_option("--epochs", epochs, "max training epochs");
    pre->add_option("--k", mc_k, "lookahead steps for the regression targets");
    pre->add_option("--gamma", gamma, "discount factor");
    pre->add_option("--ips", ips, "optimizer iterations per simulated second while collecting");

    auto* trn = app.add_subcommand("train", "Q-learning fine-tuning of a model");
    std::string model_in;
    trn->add_option("--model", model_in, "input model file")->required();
    trn->add_option("--episodes", episodes, "fine-tuning episodes");
    trn->add_option("--lr", lr, "learning rate");
    trn->add_option("--batch", batch, "mini-batch size");
    trn->add_option("--gamma", gamma, "discount factor");
    trn->add_option("--ips", ips, "optimizer iterations per simulated second");

    auto* eva = app.add_subcommand("evaluate", "run the settings-by-seeds matrix");
    std::string settings_arg = "A", seeds_arg, budget_sweep;
    eva->add_option("--settings", settings_arg, "comma list of A,B,C,D,E,Our");
    eva->add_option("--seeds", seeds_arg, "comma list of seeds (default: --seed)");
    eva->add_option("--model", model_path, "model file for learned settings");
    eva->add_option("--budget-sweep", budget_sweep,
                    "comma list of fixed iteration budgets; 'full' = gap-scaled");
    eva->add_option("--ips", ips, "iterations per simulated second (full-gap budget)");
    eva->add_option("--fixed-iterations", fixed_iterations, "constant budget per gap");
    eva->add_option("--gamma", gamma, "discount factor");
    eva->add_flag("--measure-latency", measure_latency,
                  "report wall-clock confirmation latency in the CSV (non-reproducible)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_requests(common);
        if (sim->parsed())
            return cmd_simulate(common, requests_path, acceptance, objective, model_path, ips,
                                fixed_iterations, realtime, measure_latency);
        if (pre->parsed())
            return cmd_pretrain(common, experiences_path, episodes, hidden, lr, batch, epochs,
                                mc_k, gamma, ips);
        if (trn->parsed())
            return cmd_train(common, model_in, episodes, lr, batch, gamma, ips);
        if (eva->parsed())
            return cmd_evaluate(common, settings_arg, seeds_arg, model_path, budget_sweep, ips,
                                fixed_iterations, gamma, measure_latency);
    } catch (const dvrp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const dvrp::IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return kExitIntegrity;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitConfig;
}
