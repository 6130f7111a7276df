#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "skinfit/anim_io.hpp"
#include "skinfit/codec.hpp"
#include "skinfit/error.hpp"
#include "skinfit/fitting.hpp"
#include "skinfit/initializers.hpp"
#include "skinfit/metrics.hpp"
#include "skinfit/rng.hpp"

namespace skinfit::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
    bool strict = false;
    bool quiet = false;
};

struct SynthOptions {
    std::size_t bones = 2;
    std::size_t vertices_per_segment = 64;
    std::size_t frames = 30;
    std::size_t count = 1;
    std::uint64_t seed = 0;
    fs::path out_dir = ".";
};

struct TrainOptions {
    fs::path data_dir;
    std::size_t b_max = 32;
    TrainConfig config;
    double validation_split = 0.2;
    fs::path checkpoint = "model.cnn";
    fs::path log = "train_log.csv";
};

struct DecomposeOptions {
    fs::path input;
    std::string init = "cluster:6";
    SolverConfig solver;
    double epsilon = 1e-3;
    std::uint64_t seed = 0;
    std::string rest_pose = "frame:0";
    fs::path out;
    fs::path trace;
};

struct ReconstructOptions {
    fs::path input;
    fs::path out;
};

struct EvaluateOptions {
    fs::path original;
    fs::path approx;
    std::optional<std::size_t> frame;
    fs::path per_vertex_out;
    std::size_t bones = 0;
};

struct InfoOptions {
    fs::path input;
};

std::string csv(const ErrorReport& r) {
    std::ostringstream s;
    s << std::setprecision(17) << r.disper << ',' << r.erms << ',' << r.max_avg_dist << ',' << r.norm_distort << ','
      << r.crp;
    return s.str();
}

constexpr const char* kReportHeader = "disper,erms,maxavgdist,normdistort,crp";

std::string file_stem(std::size_t index) {
    std::ostringstream s;
    s << "anim_" << std::setw(3) << std::setfill('0') << index;
    return s.str();
}

void run_synth(const SynthOptions& o, std::ostream& out) {
    fs::create_directories(o.out_dir);
    for (std::size_t k = 0; k < o.count; ++k) {
        const SyntheticRig rig = make_synthetic_rig(o.bones, o.vertices_per_segment, o.frames, o.seed + k);
        const fs::path base = o.out_dir / file_stem(k);

        LabelSet labels;
        labels.label_count = o.bones;
        labels.bits.assign(rig.sequence.vertex_count() * o.bones, 0);
        for (std::size_t i = 0; i < rig.weights.vertex_count(); ++i) {
            for (const auto& inf : rig.weights[i]) {
                if (inf.weight > 0.0) labels.row(i)[inf.bone] = 1;
            }
        }
        save_anim(fs::path(base).replace_extension(".anim"), rig.sequence);
        save_labels(fs::path(base).replace_extension(".labels"), labels);
        save_weights(fs::path(base).replace_extension(".weights"), rig.weights, o.bones);
        out << fs::path(base).replace_extension(".anim").string() << '\n';
    }
}

void run_train(const TrainOptions& o, const Common& common, std::ostream& out) {
    std::vector<fs::path> anims;
    for (const auto& entry : fs::directory_iterator(o.data_dir)) {
        if (entry.path().extension() == ".anim") anims.push_back(entry.path());
    }
    std::sort(anims.begin(), anims.end());
    if (anims.empty()) throw Error("no .anim files in " + o.data_dir.string());

    std::map<std::size_t, std::vector<std::string>> by_frames;
    std::vector<std::pair<AnimSequence, LabelSet>> loaded;
    for (const auto& path : anims) {
        AnimSequence seq = load_anim(path);
        LabelSet labels = load_labels(fs::path(path).replace_extension(".labels"));
        if (labels.vertex_count() != seq.vertex_count()) {
            throw ShapeError(path.string() + ": label file has " + std::to_string(labels.vertex_count()) +
                             " rows for " + std::to_string(seq.vertex_count()) + " vertices");
        }
        by_frames[seq.frame_count()].push_back(path.filename().string());
        loaded.emplace_back(std::move(seq), std::move(labels));
    }
    if (by_frames.size() > 1) {
        std::ostringstream msg;
        msg << "training files must share one frame count; found";
        for (const auto& [frames, files] : by_frames) {
            msg << " F=" << frames << ":";
            for (const auto& f : files) msg << ' ' << f;
            msg << ';';
        }
        throw ShapeError(msg.str());
    }

    Dataset all;
    for (const auto& [seq, labels] : loaded) {
        for (std::size_t i = 0; i < seq.vertex_count(); ++i) all.append(trajectory(seq, i).values, labels.row(i), o.b_max);
    }
    const auto [train_set, held_out] = [&] {
        std::vector<std::size_t> order(all.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        CounterRng rng(splitmix64(o.config.seed) ^ 0x5A5A5A5AULL);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        const auto hold = static_cast<std::size_t>(o.validation_split * static_cast<double>(all.size()));
        Dataset a, b;
        for (std::size_t k = 0; k < order.size(); ++k) {
            Dataset& dst = k < order.size() - hold ? a : b;
            dst.inputs.push_back(all.inputs[order[k]]);
            dst.labels.push_back(all.labels[order[k]]);
        }
        return std::pair{std::move(a), std::move(b)};
    }();

    const TrainResult result = train(train_set, o.config);

    std::ostringstream log;
    log << "epoch,loss,binary_accuracy\n" << std::setprecision(17);
    for (const auto& e : result.history) log << e.epoch << ',' << e.loss << ',' << e.binary_accuracy << '\n';
    write_file_atomic(o.log, log.str());
    std::ostringstream ckpt;
    write_checkpoint(ckpt, result.model);
    write_file_atomic(o.checkpoint, ckpt.str());

    if (!common.quiet) out << "heldout_examples,heldout_loss,heldout_binary_accuracy\n";
    if (held_out.size() > 0) {
        const EpochStats s = evaluate_dataset(result.model, held_out);
        out << std::setprecision(17) << held_out.size() << ',' << s.loss << ',' << s.binary_accuracy << '\n';
    } else {
        out << "0,nan,nan\n";
    }
}

ExtractedWeights initial_weights(const DecomposeOptions& o, const AnimSequence& seq) {
    const auto colon = o.init.find(':');
    if (colon == std::string::npos) throw Error("--init must be cnn:<checkpoint> or cluster:<k>");
    const std::string kind = o.init.substr(0, colon);
    const std::string arg = o.init.substr(colon + 1);
    if (kind == "cluster") {
        std::size_t k = 0;
        try {
            k = std::stoul(arg);
        } catch (const std::exception&) {
            throw Error("--init cluster:<k> needs an integer k, got '" + arg + "'");
        }
        return extract_weights(labels_to_probabilities(cluster_trajectories(seq, k, o.seed)), o.epsilon);
    }
    if (kind == "cnn") {
        std::ifstream in(arg);
        if (!in) throw Error("cannot open checkpoint " + arg);
        const CnnModel model = read_checkpoint(in);
        if (model.input_len != 3 * seq.frame_count()) {
            throw ShapeError("checkpoint expects trajectories of length " + std::to_string(model.input_len) +
                             ", animation has 3 x " + std::to_string(seq.frame_count()));
        }
        return extract_weights(predict_probabilities(model, seq), o.epsilon);
    }
    throw Error("unknown initializer '" + kind + "'");
}

AnimSequence choose_rest(const AnimSequence& seq, const std::string& choice) {
    if (choice == "file") return seq;
    if (choice.rfind("frame:", 0) == 0) {
        try {
            return seq.with_rest_from_frame(std::stoul(choice.substr(6)));
        } catch (const std::invalid_argument&) {
        }
    }
    throw Error("--rest-pose must be 'file' or 'frame:<p>', got '" + choice + "'");
}

void run_decompose(const DecomposeOptions& o, const Common& common, std::ostream& out, Diagnostics& diag) {
    const AnimSequence original = load_anim(o.input);
    const AnimSequence seq = choose_rest(original, o.rest_pose);
    const ExtractedWeights init = initial_weights(o, seq);
    const AlternationResult fit = alternate(seq, init.weights, init.bone_count, o.solver, &diag);

    const std::vector<std::uint8_t> bytes = encode(fit.model);
    const fs::path target = o.out.empty() ? fs::path(o.input).replace_extension(".sknd") : o.out;
    write_file_atomic(target, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    if (!o.trace.empty()) {
        std::ostringstream trace;
        fit.trace.write_csv(trace);
        write_file_atomic(o.trace, trace.str());
    }

    const AnimSequence approx = lbs_sequence(fit.model);
    const ErrorReport report = evaluate(seq, approx, fit.model.bone_count(), &diag);
    if (!common.quiet) {
        out << "N,P,B\n"
            << seq.vertex_count() << ',' << seq.frame_count() << ',' << fit.model.bone_count() << '\n'
            << kReportHeader << '\n';
    }
    out << csv(report) << '\n';
}

void run_reconstruct(const ReconstructOptions& o) {
    const SkinningModel model = decode(read_bytes(o.input));
    const fs::path target = o.out.empty() ? fs::path(o.input).replace_extension(".anim") : o.out;
    save_anim(target, lbs_sequence(model));
}

void run_evaluate(const EvaluateOptions& o, const Common& common, std::ostream& out, Diagnostics& diag) {
    const AnimSequence original = load_anim(o.original);
    std::size_t bones = o.bones;
    AnimSequence approx;
    const auto bytes = read_bytes(o.approx);
    if (has_codec_magic(bytes)) {
        const SkinningModel model = decode(bytes);
        bones = model.bone_count();
        approx = lbs_sequence(model);
    } else {
        approx = load_anim(o.approx);
    }
    if (original.vertex_count() != approx.vertex_count() || original.frame_count() != approx.frame_count() ||
        original.faces().size() != approx.faces().size()) {
        std::ostringstream msg;
        msg << "cannot compare: original N=" << original.vertex_count() << " P=" << original.frame_count()
            << " faces=" << original.faces().size() << ", approximation N=" << approx.vertex_count()
            << " P=" << approx.frame_count() << " faces=" << approx.faces().size();
        throw ShapeError(msg.str());
    }

    const ErrorReport report = evaluate(original, approx, bones, &diag);
    if (!common.quiet) out << kReportHeader << '\n';
    out << csv(report) << '\n';

    if (o.frame) {
        const auto errors = per_vertex_error(original, approx, *o.frame);
        std::ostringstream dump;
        dump << std::setprecision(17);
        for (double e : errors) dump << e << '\n';
        if (o.per_vertex_out.empty()) {
            out << dump.str();
        } else {
            write_file_atomic(o.per_vertex_out, dump.str());
        }
    }
}

void run_info(const InfoOptions& o, std::ostream& out) {
    const auto bytes = read_bytes(o.input);
    if (has_codec_magic(bytes)) {
        const CompressedHeader h = decode_header(bytes);
        out << "format,version,N,P,B,faces\n"
            << "SKND," << h.version << ',' << h.vertex_count << ',' << h.frame_count << ',' << h.bone_count << ','
            << h.face_count << '\n';
        return;
    }
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::string tag;
    std::size_t n = 0, p = 0, f = 0;
    if (!(in >> tag >> n >> p >> f) || tag != "ANIM") throw FormatError(o.input.string() + ": unrecognized file type");
    out << "format,N,P,faces\nANIM," << n << ',' << p << ',' << f << '\n';
}

}  // namespace

void save_labels(const fs::path& path, const LabelSet& labels) {
    std::ostringstream s;
    s << "LABELS " << labels.vertex_count() << ' ' << labels.label_count << '\n';
    for (std::size_t i = 0; i < labels.vertex_count(); ++i) {
        const auto row = labels.row(i);
        for (std::size_t k = 0; k < row.size(); ++k) s << (k ? " " : "") << int(row[k]);
        s << '\n';
    }
    write_file_atomic(path, s.str());
}

LabelSet load_labels(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string tag;
    std::size_t n = 0;
    LabelSet labels;
    if (!(in >> tag >> n >> labels.label_count) || tag != "LABELS" || labels.label_count == 0) {
        throw FormatError(path.string() + ": bad LABELS header");
    }
    labels.bits.resize(n * labels.label_count);
    for (auto& b : labels.bits) {
        int v = -1;
        if (!(in >> v) || (v != 0 && v != 1)) throw FormatError(path.string() + ": labels must be 0 or 1");
        b = static_cast<std::uint8_t>(v);
    }
    validate_labels(labels);
    return labels;
}

void save_weights(const fs::path& path, const WeightMap& weights, std::size_t bone_count) {
    std::ostringstream s;
    s << "WEIGHTS " << weights.vertex_count() << ' ' << bone_count << '\n' << std::setprecision(17);
    for (const auto& list : weights.vertices) {
        s << list.size();
        for (const auto& inf : list) s << ' ' << inf.bone << ' ' << inf.weight;
        s << '\n';
    }
    write_file_atomic(path, s.str());
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Linear blend skinning compression for mesh animations", "skinfit"};
    app.require_subcommand(1);
    Common common;
    app.add_flag("--strict", common.strict, "Treat warnings as failures");
    app.add_flag("--quiet", common.quiet, "Print only result rows");

    SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic rigged animations with ground truth");
    synth_cmd->add_option("--bones", synth.bones)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--vertices-per-segment", synth.vertices_per_segment)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--frames", synth.frames)->check(CLI::Range(2, 1 << 20));
    synth_cmd->add_option("--count", synth.count)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", synth.seed);
    synth_cmd->add_option("--out-dir", synth.out_dir);

    TrainOptions tr;
    auto* train_cmd = app.add_subcommand("train", "Train the trajectory classifier");
    train_cmd->add_option("--data-dir", tr.data_dir)->required();
    train_cmd->add_option("--b-max", tr.b_max)->check(CLI::PositiveNumber);
    train_cmd->add_option("--epochs", tr.config.epochs)->check(CLI::Range(1, 100));
    train_cmd->add_option("--batch-size", tr.config.batch_size)->check(CLI::PositiveNumber);
    train_cmd->add_option("--learning-rate", tr.config.learning_rate)->check(CLI::PositiveNumber);
    train_cmd->add_option("--seed", tr.config.seed);
    train_cmd->add_option("--validation-split", tr.validation_split)->check(CLI::Range(0.0, 0.9));
    train_cmd->add_option("--checkpoint", tr.checkpoint);
    train_cmd->add_option("--log", tr.log);

    DecomposeOptions dec;
    auto* dec_cmd = app.add_subcommand("decompose", "Fit a skinning model to an animation");
    dec_cmd->add_option("input", dec.input, "ANIM file")->required();
    dec_cmd->add_option("--init", dec.init, "cnn:<checkpoint> or cluster:<k>");
    dec_cmd->add_option("--iterations", dec.solver.alternation_iterations);
    dec_cmd->add_option("--cg-tolerance", dec.solver.cg_tolerance)->check(CLI::PositiveNumber);
    dec_cmd->add_option("--cg-max-iterations", dec.solver.cg_max_iterations);
    dec_cmd->add_option("--convexity-scale", dec.solver.convexity_row_scale)->check(CLI::PositiveNumber);
    dec_cmd->add_option("--epsilon", dec.epsilon)->check(CLI::Range(0.0, 1.0));
    dec_cmd->add_option("--seed", dec.seed);
    dec_cmd->add_option("--rest-pose", dec.rest_pose, "frame:<p> or file");
    dec_cmd->add_option("--out", dec.out, "Compressed output (default: input with .sknd)");
    dec_cmd->add_option("--trace", dec.trace, "Fit trace CSV");

    ReconstructOptions rec;
    auto* rec_cmd = app.add_subcommand("reconstruct", "Expand a compressed file back to ANIM");
    rec_cmd->add_option("input", rec.input)->required();
    rec_cmd->add_option("--out", rec.out);

    EvaluateOptions ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "Compare an approximation against the original");
    ev_cmd->add_option("original", ev.original)->required();
    ev_cmd->add_option("approx", ev.approx, "ANIM or compressed file")->required();
    ev_cmd->add_option("--frame", ev.frame, "Dump per-vertex error at this frame");
    ev_cmd->add_option("--per-vertex-out", ev.per_vertex_out);
    ev_cmd->add_option("--bones", ev.bones, "Bone count for the compression rate of an ANIM approximation");

    InfoOptions info;
    auto* info_cmd = app.add_subcommand("info", "Print header fields of an ANIM or compressed file");
    info_cmd->add_option("input", info.input)->required();

    for (auto* sub : app.get_subcommands({})) {
        sub->add_flag("--strict", common.strict, "Treat warnings as failures");
        sub->add_flag("--quiet", common.quiet, "Print only result rows");
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    Diagnostics diag;
    try {
        if (*synth_cmd) run_synth(synth, out);
        if (*train_cmd) run_train(tr, common, out);
        if (*dec_cmd) run_decompose(dec, common, out, diag);
        if (*rec_cmd) run_reconstruct(rec);
        if (*ev_cmd) run_evaluate(ev, common, out, diag);
        if (*info_cmd) run_info(info, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    for (const auto& w : diag.warnings) err << "warning: " << w << '\n';
    return common.strict && !diag.empty() ? 2 : 0;
}

}  // namespace skinfit::cli
