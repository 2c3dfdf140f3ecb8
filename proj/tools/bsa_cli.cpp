// bsa_cli: session server, benchmark runner, continuous searches and
// transcript replay.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "bsa/service.hpp"

namespace {

using namespace bsa;

httplib::Server* running_server = nullptr;

void stop_server(int) {
    if (running_server) running_server->stop();
}

int serve(const std::string& host, int port, const std::string& data_dir) {
    SessionStore store(data_dir.empty() ? default_data_dir() : std::filesystem::path(data_dir));
    httplib::Server server;
    register_routes(server, store);
    running_server = &server;
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    fmt::print(stderr, "serving sessions from {} on http://{}:{}\n", store.directory().string(), host, port);
    if (!server.listen(host, port)) {
        fmt::print(stderr, "cannot listen on {}:{}\n", host, port);
        return 1;
    }
    return 0;
}

struct BenchArgs {
    BenchmarkConfig cfg;
    std::vector<std::string> methods{"rm", "rmj", "rpj", "wu-map", "bsa-bayes", "bsa-map"};
    std::string model = "M2";
    int slices = 0;
    int stage1 = 0, stage2 = 0, switch_step = 0;
    bool no_carry = false;
    std::string out, long_out, plot_out;
};

int bench(BenchArgs& a) {
    BenchmarkConfig& cfg = a.cfg;
    cfg.methods.clear();
    for (const std::string& m : a.methods) cfg.methods.push_back(method_from_string(m));
    cfg.model = model_from_string(a.model);
    if (a.slices > 0) cfg.schedule = SSchedule::fixed(a.slices);
    if (a.stage1 > 0) cfg.schedule.stage1 = a.stage1;
    if (a.stage2 > 0) cfg.schedule.stage2 = a.stage2;
    if (a.switch_step > 0) cfg.schedule.switch_step = a.switch_step;
    cfg.carry_bounds = !a.no_carry;
    const BenchmarkResult r = run_benchmark(cfg);
    if (a.out.empty())
        std::cout << summary_csv(r);
    else
        emit_csv(r, a.out, a.long_out);
    if (a.out.empty() && !a.long_out.empty()) {
        std::ofstream lo(a.long_out);
        lo << long_csv(r);
    }
    if (!a.plot_out.empty()) emit_plotdata(r, a.plot_out);
    return 0;
}

struct SearchArgs {
    std::string oracle;
    int q = 2;
    double scale = 1.0;
    double range = 0.0;
    int horizon = 30;
    std::uint64_t seed = 0;
    double lo = 0.0, hi = 1.0;
    double x1 = std::numeric_limits<double>::quiet_NaN();  // original coordinates
    double gain = 1.0, width = 1.0;
};

SearchOptions options_of(const SearchArgs& a) {
    SearchOptions opt;
    opt.encoder = a.range > 0.0 ? SigmoidEncoder::for_range(a.range, a.q) : SigmoidEncoder{a.scale, a.q};
    opt.horizon = a.horizon;
    opt.seed = a.seed;
    opt.domain_lo = a.lo;
    opt.domain_hi = a.hi;
    if (!std::isnan(a.x1)) opt.x1 = scale(a.x1, a.lo, a.hi);
    opt.validate();
    return opt;
}

/// Reads one response per query from stdin after printing the query point.
double ask(double x) {
    std::cout << fmt::format("{}", x) << std::endl;
    std::string line;
    while (std::getline(std::cin, line)) {
        std::istringstream in(line);
        double y;
        if (in >> y) return y;
    }
    throw std::runtime_error("response stream ended");
}

void print_trajectory(const SearchTrajectory& tr, bool with_clip) {
    fmt::print("n,x,y,binaries{}\n", with_clip ? ",clipped" : "");
    for (std::size_t n = 0; n < tr.y.size(); ++n) {
        std::string bits;
        for (int b : tr.binaries[n]) bits += static_cast<char>('0' + b);
        fmt::print("{},{},{},{}", n + 1, tr.x[n], tr.y[n], bits);
        if (with_clip) fmt::print(",{}", tr.clipped[n] ? 1 : 0);
        fmt::print("\n");
    }
    fmt::print("final,{}\n", tr.x.back());
}

int root_search_cmd(const SearchArgs& a) {
    const SearchOptions opt = options_of(a);
    if (a.oracle == "example2") {
        print_trajectory(root_search(cubic_response, opt), false);
        return 0;
    }
    const SearchTrajectory tr = root_search([](double x, SeededRng&) { return ask(x); }, opt);
    std::cerr << fmt::format("final {}\n", tr.x.back());
    return 0;
}

int kw_search_cmd(const SearchArgs& a) {
    const SearchOptions opt = options_of(a);
    const KwProbe probe{a.gain, a.width};
    if (a.oracle == "example3") {
        print_trajectory(kw_search(quadratic_objective, opt, probe), true);
        return 0;
    }
    const SearchTrajectory tr = kw_search([](double x, SeededRng&) { return ask(x); }, opt, probe);
    std::cerr << fmt::format("final {}\n", tr.x.back());
    return 0;
}

int replay_cmd(const std::string& path, const std::string& out) {
    std::ifstream in(path);
    if (!in) {
        fmt::print(stderr, "cannot read {}\n", path);
        return 2;
    }
    const json transcript = json::parse(in);
    const ReplayReport report = replay(transcript);
    if (!out.empty()) {
        std::ofstream o(out);
        o << to_json(report.record).dump(2) << "\n";
    }
    fmt::print("steps {}\n", report.record.outcomes.size());
    fmt::print("state {}\n", report.state_matches ? "identical" : "differs");
    fmt::print("recommendations {}\n", report.recommendations_match ? "identical" : "differ");
    return report.identical() ? 0 : 1;
}

void add_search_flags(CLI::App* cmd, SearchArgs& a, const std::string& builtin) {
    cmd->add_option("--oracle", a.oracle, "Response source: " + builtin + " or stdin (print x, read y per line)")
        ->check(CLI::IsMember({builtin, std::string("stdin")}))
        ->default_val(builtin);
    cmd->add_option("--q", a.q, "Binaries per response")->default_val(2);
    cmd->add_option("--scale", a.scale, "Sigmoid scale b")->default_val(1.0);
    cmd->add_option("--range", a.range, "Response bound C; sets b = 3/C");
    cmd->add_option("--horizon", a.horizon, "Responses to consume")->default_val(30);
    cmd->add_option("--seed", a.seed, "Noise seed for the built-in oracle")->default_val(0);
    cmd->add_option("--lo", a.lo, "Domain lower end")->default_val(0.0);
    cmd->add_option("--hi", a.hi, "Domain upper end")->default_val(1.0);
    cmd->add_option("--x1", a.x1, "Starting point (default mid-domain)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian stochastic approximation toolkit"};
    app.require_subcommand(1);

    std::string host = "127.0.0.1", data_dir;
    int port = 8080;
    auto* serve_cmd = app.add_subcommand("serve", "Run the session HTTP/JSON service");
    serve_cmd->add_option("--port", port, "TCP port")->default_val(8080);
    serve_cmd->add_option("--host", host, "Bind address")->default_val("127.0.0.1");
    serve_cmd->add_option("--data-dir", data_dir, "Session directory (default $BSA_DATA_DIR or ./bsa-sessions)");

    BenchArgs b;
    auto* bench_cmd = app.add_subcommand("bench", "Run the Monte Carlo RMSE benchmark");
    bench_cmd->add_option("--methods", b.methods, "rm, rmj, rpj, wu-map, bsa-bayes, bsa-map")->delimiter(',');
    bench_cmd->add_option("--model", b.model, "M1..M7")->default_val("M2");
    bench_cmd->add_option("--alphas", b.cfg.alphas, "Target levels")->delimiter(',');
    bench_cmd->add_option("--horizon", b.cfg.horizon, "Steps per replication")->default_val(20);
    bench_cmd->add_option("--replications", b.cfg.replications, "Replications per cell")->default_val(1000);
    bench_cmd->add_option("--seed", b.cfg.seed, "Master seed")->default_val(20240611);
    bench_cmd->add_option("--slices", b.slices, "Fixed slice count s (default 17)");
    bench_cmd->add_option("--stage1", b.stage1, "Slice count before the switch step");
    bench_cmd->add_option("--stage2", b.stage2, "Slice count from the switch step on");
    bench_cmd->add_option("--switch-step", b.switch_step, "First step using stage2");
    bench_cmd->add_option("--x1", b.cfg.x1, "Starting point, scaled")->default_val(0.5);
    bench_cmd->add_flag("--no-carry-bounds", b.no_carry, "Keep flat priors when moving between slices");
    bench_cmd->add_option("--wu-mu0", b.cfg.wu_prior.mu0, "Wu-MAP prior mean of the location");
    bench_cmd->add_option("--wu-tau", b.cfg.wu_prior.tau, "Wu-MAP prior scale of the location");
    bench_cmd->add_option("--wu-xi", b.cfg.wu_prior.xi, "Wu-MAP exponential rate on sigma");
    bench_cmd->add_option("--wu-sigma-min", b.cfg.wu_prior.sigma_min, "Wu-MAP lower bound on sigma");
    bench_cmd->add_option("--out", b.out, "Summary CSV (default stdout)");
    bench_cmd->add_option("--long", b.long_out, "Per-replication CSV");
    bench_cmd->add_option("--plotdata", b.plot_out, "Wide RMSE table, one row per alpha");

    SearchArgs rs;
    auto* root_cmd = app.add_subcommand("root-search", "Median search on encoded continuous responses");
    add_search_flags(root_cmd, rs, "example2");

    SearchArgs ks;
    auto* kw_cmd = app.add_subcommand("kw-search", "Minimum search on encoded difference quotients");
    add_search_flags(kw_cmd, ks, "example3");
    kw_cmd->add_option("--gain", ks.gain, "Classic recursion gain a in a/n")->default_val(1.0);
    kw_cmd->add_option("--width", ks.width, "Probe width c in c n^(-1/3), scaled")->default_val(1.0);

    std::string transcript, replay_out;
    auto* replay_sub = app.add_subcommand("replay", "Replay an exported session transcript");
    replay_sub->add_option("transcript", transcript, "Exported session JSON")->required();
    replay_sub->add_option("--out", replay_out, "Write the replayed record here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve_cmd) return serve(host, port, data_dir);
        if (*bench_cmd) return bench(b);
        if (*root_cmd) return root_search_cmd(rs);
        if (*kw_cmd) return kw_search_cmd(ks);
        if (*replay_sub) return replay_cmd(transcript, replay_out);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
    return 0;
}
