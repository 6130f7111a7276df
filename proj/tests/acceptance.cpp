// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "cnn_oracle.hpp"
#include "commands.hpp"
#include "oracles.hpp"
#include "skinfit/anim_io.hpp"
#include "skinfit/codec.hpp"
#include "skinfit/fitting.hpp"
#include "skinfit/initializers.hpp"
#include "skinfit/metrics.hpp"
#include "support.hpp"

using namespace skinfit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

void criterion(int id, const std::string& title, double budget_seconds, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (budget_seconds > 0 && secs > budget_seconds) {
        o.pass = false;
        o.detail << " [over time budget " << budget_seconds << " s]";
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << "  " << title << ":" << o.detail.str() << " ("
              << std::fixed << std::setprecision(2) << secs << " s)" << std::defaultfloat << std::endl;
}

struct Cli {
    int code;
    std::string out, err;
};

Cli run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::vector<double> csv_row(const std::string& line) {
    std::vector<double> v;
    std::istringstream in(line);
    for (std::string cell; std::getline(in, cell, ',');) v.push_back(std::stod(cell));
    return v;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("skinfit_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void compression_rates(Outcome& o) {
    struct Row {
        std::size_t n, p, b;
        double expected;
    };
    for (const Row& r : {Row{8431, 48, 26, 92.5}, Row{9971, 175, 17, 97.6}, Row{42321, 48, 18, 93.59},
                         Row{21887, 48, 16, 93.45}}) {
        const double crp = compression_rate(r.n, r.p, r.b);
        o.detail << " (" << r.n << "," << r.p << "," << r.b << ")=" << std::setprecision(4) << crp;
        o.require(std::abs(crp - r.expected) <= 0.1, "CRP " + std::to_string(r.expected));
    }
}

void synthetic_round_trip(Outcome& o) {
    const SyntheticRig rig = make_synthetic_rig(3, 168, 30, 7);
    const fs::path dir = scratch("roundtrip");
    const fs::path anim = dir / "rig.anim";
    save_anim(anim, rig.sequence);
    const Cli dec = run_cli({"decompose", anim.string(), "--init", "cluster:6", "--iterations", "5", "--seed", "0",
                             "--out", (dir / "rig.sknd").string(), "--trace", (dir / "trace.csv").string()});
    o.require(dec.code == 0, "decompose exit code " + std::to_string(dec.code) + " " + dec.err);
    const auto out = lines_of(dec.out);
    o.require(out.size() == 4, "summary shape");
    if (out.size() != 4) return;
    const auto report = csv_row(out[3]);
    // Metrics are measured against the rest pose the decomposition used (frame 0).
    const double diag = bounding_box_diagonal(rig.sequence.positions());
    o.detail << " N=" << rig.sequence.vertex_count() << " DisPer=" << report[0] << " ERMS=" << report[1]
             << " bbox_diag=" << diag;
    o.require(report[0] < 5.0, "DisPer < 5");
    o.require(report[1] < 0.01 * diag * 100.0, "ERMS < 1% of bbox diagonal (x100)");

    const AlternationResult truth = alternate(rig.sequence, rig.weights, 3);
    const double first_tf = truth.trace.entries.front().objective;
    o.detail << " ground-truth first TF objective=" << first_tf;
    o.require(first_tf < 1e-12, "ground-truth objective < 1e-12");
    fs::remove_all(dir);
}

void monotonicity(Outcome& o) {
    double worst = 0.0;
    std::size_t steps = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const std::size_t bones = 2 + seed % 4;
        const SyntheticRig rig = make_synthetic_rig(bones, 48, 16, 500 + seed);
        const auto init =
            extract_weights(labels_to_probabilities(cluster_trajectories(rig.sequence, bones + 2, seed)), 1e-3);
        const auto result = alternate(rig.sequence, init.weights, init.bone_count);
        const auto& e = result.trace.entries;
        for (std::size_t k = 1; k < e.size(); ++k) {
            worst = std::max(worst, (e[k].objective - e[k - 1].objective) / std::max(e[k - 1].objective, 1e-300));
            ++steps;
        }
    }
    o.detail << " half-steps=" << steps << " largest relative increase=" << worst;
    o.require(worst <= 1e-8, "objective non-increasing within 1e-8");
}

void solver_oracles(Outcome& o) {
    double worst_cgls = 0.0;
    for (unsigned seed = 0; seed < 20; ++seed) {
        std::srand(seed + 1);
        const Eigen::MatrixXd a = Eigen::MatrixXd::Random(50, 12);
        const Eigen::VectorXd b = Eigen::VectorXd::Random(50);
        const Eigen::VectorXd direct = (a.transpose() * a).ldlt().solve(a.transpose() * b);
        const LinearOperator fwd = [&](std::span<const double> x, std::span<double> y) {
            Eigen::Map<Eigen::VectorXd>(y.data(), 50) = a * Eigen::Map<const Eigen::VectorXd>(x.data(), 12);
        };
        const LinearOperator adj = [&](std::span<const double> x, std::span<double> y) {
            Eigen::Map<Eigen::VectorXd>(y.data(), 12) = a.transpose() * Eigen::Map<const Eigen::VectorXd>(x.data(), 50);
        };
        const auto r = cgls(fwd, adj, std::span<const double>(b.data(), 50), 12, SolverConfig{});
        worst_cgls = std::max(worst_cgls, (r.x - direct).norm() / direct.norm());
    }
    o.detail << " cgls vs direct worst=" << worst_cgls;
    o.require(worst_cgls < 1e-6, "cgls within 1e-6");

    double worst_tf = 0.0, worst_wf = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto inst = testing::random_instance(20, 2, 3, 3, 0.05, seed);
        const std::size_t n = 20, p = 2, b = 3;
        const Eigen::MatrixXd block = oracle::transform_system(inst.sequence, inst.weights, b);
        Eigen::MatrixXd full = Eigen::MatrixXd::Zero(3 * n * p, 12 * b * p);
        Eigen::VectorXd rhs(3 * n * p);
        for (std::size_t f = 0; f < p; ++f) {
            full.block(3 * n * f, 12 * b * f, 3 * n, 12 * b) = block;
            rhs.segment(3 * n * f, 3 * n) = oracle::frame_vector(inst.sequence, f);
        }
        const Eigen::VectorXd x = full.colPivHouseholderQr().solve(rhs);
        const double dense = (full * x - rhs).squaredNorm();
        const double decoupled =
            skinning_objective(inst.sequence, inst.weights, solve_transforms(inst.sequence, inst.weights, b));
        worst_tf = std::max(worst_tf, testing::relative_difference(dense, decoupled));

        const auto winst = testing::random_instance(3, 4, 3, 2, 0.02, 40 + seed);
        const WeightMap start = testing::support_of(winst.weights);
        std::vector<std::pair<std::size_t, std::uint32_t>> slots;
        for (std::size_t i = 0; i < 3; ++i) {
            for (const auto& inf : start[i]) slots.emplace_back(i, inf.bone);
        }
        const Eigen::Index rows = 13;
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3 * rows, static_cast<Eigen::Index>(slots.size()));
        Eigen::VectorXd y = Eigen::VectorXd::Zero(3 * rows);
        for (std::size_t s = 0; s < slots.size(); ++s) {
            const auto [i, bone] = slots[s];
            const auto row0 = rows * static_cast<Eigen::Index>(i);
            for (std::size_t f = 0; f < 4; ++f) {
                a.block<3, 1>(row0 + 3 * static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(s)) =
                    apply(winst.transforms.at(f, bone), winst.sequence.rest_pose()[i]);
            }
            a(row0 + 12, static_cast<Eigen::Index>(s)) = 1.0;
        }
        for (std::size_t i = 0; i < 3; ++i) {
            const auto row0 = rows * static_cast<Eigen::Index>(i);
            for (std::size_t f = 0; f < 4; ++f) y.segment<3>(row0 + 3 * static_cast<Eigen::Index>(f)) = winst.sequence.position(f, i);
            y(row0 + 12) = 1.0;
        }
        Eigen::VectorXd xw;
        oracle::nnls_brute_force(a, y, &xw);
        const WeightMap w = solve_weights(winst.sequence, winst.transforms, start);
        for (std::size_t s = 0, i = 0; i < 3; ++i) {
            double sum = 0;
            for (std::size_t k = 0; k < start[i].size(); ++k) sum += xw(static_cast<Eigen::Index>(s + k));
            for (std::size_t k = 0; k < start[i].size(); ++k, ++s) {
                worst_wf = std::max(worst_wf, std::abs(w[i][k].weight - xw(static_cast<Eigen::Index>(s)) / sum));
            }
        }
    }
    o.detail << " per-frame vs full=" << worst_tf << " per-vertex vs full=" << worst_wf;
    o.require(worst_tf < 1e-8, "per-frame decoupling within 1e-8");
    o.require(worst_wf < 1e-8, "per-vertex decoupling within 1e-8");
}

void gradient_check(Outcome& o) {
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        CounterRng rng(7000 + seed);
        const std::size_t len = 3 * (2 + rng.below(10));
        const std::size_t b = 1 + rng.below(8);
        CnnModel m = CnnModel::initialized(b, len, seed);
        std::vector<double> x(len), y(b);
        for (auto& v : x) v = rng.uniform(-2, 2);
        for (auto& v : y) v = static_cast<double>(rng.below(2));
        const CnnModel g = cnn_backward(m, x, y);
        auto params = m.tensors();
        const auto grads = g.tensors();
        for (std::size_t t = 0; t < params.size(); ++t) {
            for (std::size_t k = 0; k < params[t].size(); ++k) {
                const double analytic = grads[t][k];
                if (std::abs(analytic) <= 1e-8) continue;
                const double saved = params[t][k];
                constexpr double h = 1e-5;
                params[t][k] = saved + h;
                const long double up = oracle::cnn_loss(m, x, y);
                params[t][k] = saved - h;
                const long double down = oracle::cnn_loss(m, x, y);
                params[t][k] = saved;
                const double numeric = static_cast<double>((up - down) / (2 * h));
                worst = std::max(worst, std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric)));
                ++checked;
            }
        }
    }
    o.detail << " parameters checked=" << checked << " worst relative error=" << worst;
    o.require(checked > 0, "some gradients checked");
    o.require(worst < 1e-4, "relative error < 1e-4");
}

void training_sanity(Outcome& o) {
    const fs::path dir = scratch("train");
    const Cli synth = run_cli({"synth", "--bones", "2", "--vertices-per-segment", "64", "--frames", "20", "--count",
                               "6", "--seed", "100", "--out-dir", dir.string()});
    o.require(synth.code == 0, "synth");
    auto train = [&](const std::string& tag) {
        return run_cli({"train", "--data-dir", dir.string(), "--b-max", "2", "--epochs", "50", "--batch-size", "32",
                        "--seed", "0", "--validation-split", "0.2", "--checkpoint", (dir / (tag + ".cnn")).string(),
                        "--log", (dir / (tag + ".csv")).string(), "--quiet"});
    };
    const Cli a = train("a");
    const Cli b = train("b");
    o.require(a.code == 0, "train exit code: " + a.err);
    if (a.code != 0) return;
    const auto row = csv_row(a.out);
    o.detail << " held-out examples=" << row[0] << " loss=" << row[1] << " binary accuracy=" << row[2];
    o.require(row[2] > 0.95, "held-out accuracy > 0.95");
    o.require(a.out == b.out && slurp(dir / "a.cnn") == slurp(dir / "b.cnn"), "deterministic in seed");
    const auto log = lines_of(slurp(dir / "a.csv"));
    o.require(log.size() == 51, "50 epochs logged");
    if (log.size() > 5) {
        const double first = csv_row(log[1])[1], fifth = csv_row(log[5])[1];
        o.detail << " loss epoch1=" << first << " epoch5=" << fifth;
        o.require(fifth < first, "loss decreases from epoch 1 to epoch 5");
    }
    fs::remove_all(dir);
}

void metric_oracles(Outcome& o) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto a = testing::random_sequence(5, 4, seed);
        const auto b = testing::perturbed(a, 0.2, seed + 99);
        worst = std::max({worst, testing::relative_difference(dis_per(a, b), oracle::dis_per(a, b)),
                          testing::relative_difference(erms(a, b), oracle::erms(a, b)),
                          testing::relative_difference(max_avg_dist(a, b), oracle::max_avg_dist(a, b)),
                          testing::relative_difference(norm_distort(a, b), oracle::norm_distort(a, b))});
    }
    o.detail << " worst relative difference=" << worst;
    o.require(worst < 1e-10, "brute-force agreement within 1e-10");

    const auto orig = testing::single_vertex({{0, 0, 0}, {2, 0, 0}});
    const auto approx = testing::single_vertex({{0, 0, 0}, {0, 0, 0}});
    std::ostringstream d, e;
    d << std::fixed << std::setprecision(4) << dis_per(orig, approx);
    e << std::fixed << std::setprecision(4) << erms(orig, approx);
    o.detail << " DisPer=" << d.str() << " ERMS=" << e.str();
    o.require(d.str() == "141.4214", "DisPer 141.4214");
    o.require(e.str() == "81.6497", "ERMS 81.6497");
}

void invariant_suite(Outcome& o) {
    std::size_t maps = 0, violations = 0;
    auto check_map = [&](const WeightMap& w, std::size_t bones) {
        ++maps;
        if (!weight_violation(w, bones).empty()) ++violations;
    };
    std::size_t codec_checks = 0, codec_failures = 0;
    std::size_t property_failures = 0;

    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const std::size_t bones = 1 + seed % 5;
        const SyntheticRig rig = make_synthetic_rig(bones, 32, 10, 900 + seed);
        check_map(rig.weights, bones);

        // Properties of the animation model.
        if (skinfit::erms(rig.sequence, lbs_sequence(rig.model())) > 1e-10) ++property_failures;
        for (std::size_t p = 0; p < rig.sequence.frame_count(); ++p) {
            for (const auto& n : face_normals(rig.sequence, p)) {
                if (n && std::abs(n->norm() - 1.0) > 1e-12) ++property_failures;
            }
        }
        std::vector<Trajectory> trajectories;
        for (std::size_t i = 0; i < rig.sequence.vertex_count(); ++i) trajectories.push_back(trajectory(rig.sequence, i));
        const auto rebuilt =
            from_trajectories(trajectories, std::vector<Vec3>(rig.sequence.rest_pose().begin(), rig.sequence.rest_pose().end()),
                              std::vector<Face>(rig.sequence.faces().begin(), rig.sequence.faces().end()));
        if (!std::equal(rebuilt.positions().begin(), rebuilt.positions().end(), rig.sequence.positions().begin()))
            ++property_failures;

        // Every weight map the pipeline produces.
        const auto clusters = extract_weights(labels_to_probabilities(cluster_trajectories(rig.sequence, bones + 1, seed)), 1e-3);
        check_map(clusters.weights, clusters.bone_count);
        const CnnModel net = CnnModel::initialized(8, 3 * rig.sequence.frame_count(), seed);
        const auto predicted = extract_weights(predict_probabilities(net, rig.sequence), 1e-3);
        check_map(predicted.weights, predicted.bone_count);
        for (const auto* init : {&clusters, &predicted}) {
            const auto fit = alternate(rig.sequence, init->weights, init->bone_count);
            check_map(fit.model.weights, init->bone_count);
            check_map(solve_weights(rig.sequence, fit.model.transforms, init->weights), init->bone_count);

            const auto bytes = encode(fit.model);
            const SkinningModel decoded = decode(bytes);
            check_map(decoded.weights, decoded.bone_count());
            ++codec_checks;
            if (encode(decoded) != bytes) ++codec_failures;
            if (report_sizes(fit.model, rig.sequence).crp !=
                compression_rate(rig.sequence.vertex_count(), rig.sequence.frame_count(), init->bone_count))
                ++property_failures;

            const AnimSequence approx = lbs_sequence(fit.model);
            const double nd = norm_distort(rig.sequence, approx);
            if (!(nd >= 0 && nd <= std::numbers::pi / 2)) ++property_failures;
        }
    }

    // Random probability matrices through weight extraction.
    CounterRng rng(4242);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.below(16), b = 1 + rng.below(32);
        ProbabilityMatrix probs(n, std::vector<double>(b));
        for (auto& row : probs) {
            for (auto& v : row) v = rng.below(4) == 0 ? 0.0 : rng.uniform();
            row[rng.below(b)] = rng.uniform(1e-6, 1.0);
        }
        const auto out = extract_weights(probs, rng.uniform(0.0, 0.1));
        check_map(out.weights, out.bone_count);
    }
    // BCE is non-negative.
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> y(5), p(5);
        for (auto& v : y) v = double(rng.below(2));
        for (auto& v : p) v = rng.uniform();
        if (bce_loss(y, p) < 0) ++property_failures;
    }

    o.detail << " weight maps=" << maps << " violations=" << violations << " codec idempotence " << codec_checks - codec_failures
             << "/" << codec_checks << " property failures=" << property_failures;
    o.require(violations == 0, "weight invariants");
    o.require(codec_failures == 0, "codec idempotence");
    o.require(property_failures == 0, "properties");
}

}  // namespace

int main() {
    std::cout << "skinfit acceptance\n";
    criterion(1, "compression rate on reference configurations", 1.0, compression_rates);
    std::cout << "NOTE  criterion 2  reference ERMS values need character data that is not available; "
                 "covered by criteria 3-7 instead\n";
    criterion(3, "synthetic round trip", 30.0, synthetic_round_trip);
    criterion(4, "fit objective is monotone", 60.0, monotonicity);
    criterion(5, "solver oracles", 0.0, solver_oracles);
    criterion(6, "gradient check", 10.0, gradient_check);
    criterion(7, "training sanity", 120.0, training_sanity);
    criterion(8, "metric oracles", 0.0, metric_oracles);
    criterion(9, "invariant suite", 0.0, invariant_suite);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << "\n";
    return failures == 0 ? 0 : 1;
}
