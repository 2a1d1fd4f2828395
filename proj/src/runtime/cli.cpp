// SPDX-License-Identifier: Apache-2.0
#include "harmodop/runtime/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "harmodop/chain.hpp"
#include "harmodop/channel.hpp"
#include "harmodop/cnn/model.hpp"
#include "harmodop/cnn/train.hpp"
#include "harmodop/dataset.hpp"
#include "harmodop/motion.hpp"
#include "harmodop/rng.hpp"
#include "harmodop/runtime/config.hpp"
#include "harmodop/runtime/stream.hpp"

namespace harmodop::runtime {

namespace {

constexpr double kReferenceRcsCm2 = 0.61;

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Options {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;

    // simulate
    int sim_class = 3;
    std::string sim_cohort = "trained";
    double sim_duration = 2.0;
    std::string out_dir;
    bool sim_dataset = false;
    std::optional<int> sim_case;
    std::optional<std::size_t> sim_per_class;

    // train / eval / classify / stream
    std::string manifest;
    std::string model_out;
    std::string model;
    std::string train_log;
    std::optional<std::size_t> epochs;
    std::optional<std::string> precision;
    std::string split = "eval";
    std::string confusion;
    std::string image;
    std::string iq;
    std::optional<double> threshold;
    bool json = false;
    std::string scenario;
    std::string log;
    std::string frames;
    bool single_threaded = false;
    std::optional<double> speed;

    // linkbudget
    std::optional<double> eps, f1, g1_dbi, gn_dbi;
    std::optional<int> harmonic;
    std::vector<double> ranges{0.25, 0.5, 1.0, 2.0, 4.0};
};

Settings build_settings(const Options& o)
{
    Settings s;
    if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') {
        s.apply(load_config_file(env));
    }
    if (!o.config_path.empty()) {
        s.apply(load_config_file(o.config_path));
    }
    for (const auto& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw UsageError("--set expects key=value, got '" + kv + "'");
        }
        auto trim = [](std::string x) {
            const auto b = x.find_first_not_of(" \t");
            const auto e = x.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : x.substr(b, e - b + 1);
        };
        s.apply(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (o.seed) {
        s.seed = *o.seed;
    }
    if (o.threshold) {
        s.hidden_threshold = *o.threshold;
    }
    return s;
}

int cmd_simulate(const Options& o, Settings s, std::ostream& out)
{
    const std::filesystem::path dir = o.out_dir;
    if (o.sim_dataset) {
        if (o.sim_case) {
            s.plan.case_id = *o.sim_case;
        }
        if (o.sim_per_class) {
            s.plan.per_class_count = *o.sim_per_class;
        }
        const auto m = dataset::generate_dataset(s.dataset_plan(), dir);
        out << "manifest=" << (dir / "manifest.jsonl").string() << " train=" << m.count(dataset::Split::train)
            << " eval=" << m.count(dataset::Split::eval) << " content_hash=" << m.content_hash << '\n';
        return 0;
    }
    if (!(o.sim_duration > 0.0)) {
        throw DomainError("--duration must be > 0");
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    }
    const auto plan = s.dataset_plan();
    const auto activity = motion::activity_from_id(o.sim_class);
    auto params =
        motion::sample_population(activity, motion::cohort_from_string(o.sim_cohort), 1, derive_seed({s.seed, 1}))
            .front();
    params.tremor = plan.tremor && activity == motion::ActivityClass::no_motion;
    const double fs = plan.radar.sample_rate;
    const auto traj = motion::generate_trajectory(params, o.sim_duration, fs);
    const auto sig = channel::synthesize(traj, plan.radar, plan.tag, plan.impairments, derive_seed({s.seed, 2}));
    motion::write_trajectory(traj, dir / "trajectory.hmdt");
    motion::write_trajectory_csv(traj, dir / "trajectory.csv");
    channel::write_baseband(sig, dir / "baseband.hmiq");

    auto chain = plan.chain;
    chain.image_size = plan.image_size;
    const auto res = dsp::process_window(sig, chain);
    auto corrected = dsp::iq_correct(sig, chain.iq);
    dsp::write_pgm(res.image, dir / "spectrogram.pgm");
    auto filt = chain.lpf;
    filt.sample_rate = fs;
    const auto lpf = dsp::butterworth_design(filt);
    corrected.i = lpf.filter(dsp::detrend(corrected.i));
    corrected.q = lpf.filter(dsp::detrend(corrected.q));
    dsp::write_spectrogram_csv(dsp::threshold_dynamic_range(dsp::stft(corrected, chain.stft), chain.range_db),
                               dir / "spectrogram.csv");
    out << "class=" << o.sim_class << " samples=" << sig.size() << " amplitude_m=" << params.amplitude
        << " speed_peak_m_s=" << params.speed_peak << " out=" << dir.string() << '\n';
    for (const auto& w : res.warnings) {
        out << "warning=" << w << '\n';
    }
    return 0;
}

int cmd_train(const Options& o, Settings s, std::ostream& out)
{
    const auto ds = dataset::load_dataset(o.manifest);
    auto spec = s.network;
    spec.input_size = ds.manifest.plan.image_size;
    if (o.precision) {
        spec.precision = cnn::precision_from_string(*o.precision);
    }
    auto options = s.train_options();
    if (o.epochs) {
        options.epochs = *o.epochs;
    }
    options.on_epoch = [&](const cnn::EpochLog& e) {
        out << "epoch=" << e.epoch << " train_loss=" << fmt("%.6f", e.train_loss)
            << " eval_loss=" << fmt("%.6f", e.eval_loss) << " train_acc=" << fmt("%.4f", e.train_acc)
            << " eval_acc=" << fmt("%.4f", e.eval_acc) << std::endl;
    };
    auto model = cnn::make_model(spec, s.init_seed());
    const auto log = std::visit([&](auto& net) { return cnn::train(net, ds.train, ds.eval, options); }, model);
    cnn::save_model(model, o.model_out);
    const std::filesystem::path log_path = o.train_log.empty() ? o.model_out + ".log.csv" : o.train_log;
    cnn::write_training_log(log, log_path);
    out << "model=" << o.model_out << " log=" << log_path.string() << '\n';
    return 0;
}

int cmd_eval(const Options& o, const Settings& s, std::ostream& out)
{
    const auto ds = dataset::load_dataset(o.manifest);
    const auto model = cnn::load_model(o.model);
    std::vector<cnn::Example> set;
    if (o.split == "eval" || o.split == "all") {
        set.insert(set.end(), ds.eval.begin(), ds.eval.end());
    }
    if (o.split == "train" || o.split == "all") {
        set.insert(set.end(), ds.train.begin(), ds.train.end());
    }
    if (set.empty()) {
        throw DomainError("split '" + o.split + "' has no entries");
    }
    const auto r =
        std::visit([&](const auto& net) { return cnn::evaluate(net, set, s.hidden_threshold); }, model);
    out << "split=" << o.split << " n=" << r.count << " accuracy=" << fmt("%.6f", r.accuracy)
        << " loss=" << fmt("%.6f", r.loss) << '\n';
    if (o.confusion.empty()) {
        out << cnn::confusion_csv(r);
    } else {
        cnn::write_confusion_csv(r, o.confusion);
        out << "confusion=" << o.confusion << '\n';
    }
    return 0;
}

int cmd_classify(const Options& o, const Settings& s, std::ostream& out)
{
    if (o.image.empty() == o.iq.empty()) {
        throw UsageError("classify needs exactly one of --image or --iq");
    }
    const auto model = cnn::load_model(o.model);
    if (!o.image.empty()) {
        const auto img = dsp::read_pgm(o.image);
        const auto d = cnn::classify(model, img, s.hidden_threshold);
        if (o.json) {
            DecisionRecord r;
            r.decision = d;
            out << decision_json(r) << '\n';
        } else {
            out << d.label << '\n';
        }
        return 0;
    }
    auto cfg = s.stream_config();
    cfg.source = SourceKind::iq_file;
    cfg.iq_path = o.iq;
    cfg.threaded = false;
    cfg.speed = 0.0;
    cfg.log_path = o.log;
    const auto report = stream(cfg, model);
    for (const auto& e : report.events) {
        if (e.kind == "source_error") {
            throw FormatError(e.message);
        }
    }
    if (report.decisions.empty()) {
        throw DomainError("IQ file is shorter than one analysis window");
    }
    std::map<int, std::size_t> votes;
    for (const auto& d : report.decisions) {
        ++votes[d.decision.label];
        if (o.json) {
            out << decision_json(d) << '\n';
        }
    }
    int best = 1;
    for (const auto& [label, n] : votes) {
        if (n > votes[best]) {
            best = label;
        }
    }
    if (!o.json) {
        out << best << '\n';
    }
    return 0;
}

int cmd_stream(const Options& o, const Settings& s, std::ostream& out, std::ostream& err)
{
    auto cfg = s.stream_config();
    cfg.model_path = o.model;
    if (!o.iq.empty()) {
        cfg.source = SourceKind::iq_file;
        cfg.iq_path = o.iq;
    } else if (!o.scenario.empty()) {
        cfg.scenario = parse_scenario(o.scenario);
    }
    cfg.log_path = o.log;
    if (!o.frames.empty()) {
        cfg.frame_dir = o.frames;
    }
    if (o.single_threaded) {
        cfg.threaded = false;
    }
    if (o.speed) {
        cfg.speed = *o.speed;
    }
    const auto r = stream(cfg);
    for (const auto& e : r.events) {
        err << "event: " << e.kind << " t=" << fmt("%.3f", e.t) << ": " << e.message << '\n';
    }
    out << "decisions=" << r.decisions.size() << " rate_hz=" << fmt("%.4f", r.decision_rate())
        << " max_proc_ms=" << fmt("%.3f", r.max_proc_ms()) << " latency_budget_ms=" << cfg.latency_budget * 1000.0
        << " dropped=" << r.windows_dropped << " max_queue_depth=" << r.max_queue_depth
        << " stream_s=" << fmt("%.3f", r.stream_seconds) << " wall_s=" << fmt("%.3f", r.wall_seconds) << '\n';
    return 0;
}

int cmd_linkbudget(const Options& o, const Settings& s, std::ostream& out)
{
    auto radar = s.plan.radar;
    auto tag = s.plan.tag;
    if (o.eps) {
        tag.epsilon_n = *o.eps;
    }
    if (o.f1) {
        radar.f1 = *o.f1;
    }
    if (o.g1_dbi) {
        tag.g_tag_1 = channel::db_to_linear(*o.g1_dbi);
    }
    if (o.gn_dbi) {
        tag.g_tag_n = channel::db_to_linear(*o.gn_dbi);
    }
    if (o.harmonic) {
        tag.harmonic_n = *o.harmonic;
    }
    channel::validate(tag);
    channel::validate(radar);
    const double rcs_cm2 = channel::harmonic_rcs(tag, radar.f1) * 1e4;
    out << "harmonic_rcs_cm2=" << fmt("%.4f", rcs_cm2) << '\n';
    out << "reference_rcs_cm2=" << fmt("%.2f", kReferenceRcsCm2) << '\n';
    out << "delta_db=" << fmt("%+.3f", channel::linear_to_db(rcs_cm2 / kReferenceRcsCm2)) << '\n';
    out << "range_m,received_power_w,received_power_dbm\n";
    for (double r : o.ranges) {
        const double p = channel::received_power(radar, tag, r);
        out << fmt("%g", r) << ',' << fmt("%.6e", p) << ',' << fmt("%.3f", channel::linear_to_db(p / 1e-3)) << '\n';
    }
    out << "class,speed_peak_m_s,doppler_hz\n";
    for (int c = 1; c <= 3; ++c) {
        const auto env = motion::envelope(motion::activity_from_id(c));
        out << c << ',' << fmt("%g", env.speed_max) << ','
            << fmt("%.2f", channel::harmonic_doppler(env.speed_max, tag.harmonic_n, radar.f1)) << '\n';
    }
    out << "doppler_hz_per_m_s=" << fmt("%.4f", channel::harmonic_doppler(1.0, tag.harmonic_n, radar.f1)) << '\n';
    return 0;
}

}  // namespace

int exit_code(ErrorCategory category) noexcept
{
    switch (category) {
    case ErrorCategory::usage: return 2;
    case ErrorCategory::config: return 3;
    case ErrorCategory::io: return 4;
    case ErrorCategory::format: return 5;
    case ErrorCategory::domain: return 6;
    }
    return kInternalErrorExit;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Harmonic micro-Doppler motion classifier"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--config", o.config_path, "key = value file (applied after $HARMODOP_CONFIG)");
    app.add_option("--set", o.overrides, "override one config key (key=value), repeatable");
    app.add_option("--seed", o.seed, "master seed");
    app.add_option("--threshold", o.threshold, "hidden-class threshold on the top-two score sum");

    auto* sim = app.add_subcommand("simulate", "trajectory, IQ and spectrogram generation, or a full dataset");
    sim->fallthrough();
    sim->add_option("--out", o.out_dir, "output directory")->required();
    sim->add_option("--class", o.sim_class, "activity class 1-4")->check(CLI::Range(1, 4));
    sim->add_option("--cohort", o.sim_cohort, "trained or untrained")->check(CLI::IsMember({"trained", "untrained"}));
    sim->add_option("--duration", o.sim_duration, "seconds");
    sim->add_flag("--dataset", o.sim_dataset, "generate a labeled dataset instead");
    sim->add_option("--case", o.sim_case, "dataset case 1-3")->check(CLI::Range(1, 3));
    sim->add_option("--per-class", o.sim_per_class, "entries per class (train + eval)");

    auto* trn = app.add_subcommand("train", "train a model on a dataset manifest");
    trn->fallthrough();
    trn->add_option("--manifest", o.manifest)->required();
    trn->add_option("--model-out", o.model_out)->required();
    trn->add_option("--log", o.train_log, "training log CSV (default <model-out>.log.csv)");
    trn->add_option("--epochs", o.epochs);
    trn->add_option("--precision", o.precision)->check(CLI::IsMember({"f32", "f64"}));

    auto* evl = app.add_subcommand("eval", "accuracy and confusion matrix");
    evl->fallthrough();
    evl->add_option("--manifest", o.manifest)->required();
    evl->add_option("--model", o.model)->required();
    evl->add_option("--split", o.split)->check(CLI::IsMember({"eval", "train", "all"}));
    evl->add_option("--confusion", o.confusion, "write the confusion matrix CSV here instead of stdout");

    auto* cls = app.add_subcommand("classify", "classify one PGM image or an IQ file");
    cls->fallthrough();
    cls->add_option("--model", o.model)->required();
    cls->add_option("--image", o.image);
    cls->add_option("--iq", o.iq);
    cls->add_option("--log", o.log, "decision log for IQ input");
    cls->add_flag("--json", o.json, "print decisions as JSON");

    auto* str = app.add_subcommand("stream", "sliding-window real-time classification");
    str->fallthrough();
    str->add_option("--model", o.model)->required();
    str->add_option("--scenario", o.scenario, "live synthesis script, e.g. 1:20,3:20,2:20");
    str->add_option("--iq", o.iq, "replay an IQ file instead of live synthesis");
    str->add_option("--log", o.log, "decision log (JSON lines)");
    str->add_option("--frames", o.frames, "directory for per-decision PGM frames");
    str->add_flag("--single-threaded", o.single_threaded);
    str->add_option("--speed", o.speed, "pacing relative to real time, 0 = unpaced");

    auto* lb = app.add_subcommand("linkbudget", "cross section, received power and Doppler budget");
    lb->fallthrough();
    lb->add_option("--eps", o.eps, "conversion efficiency");
    lb->add_option("--f1", o.f1, "fundamental frequency, Hz");
    lb->add_option("--gtag1-dbi", o.g1_dbi, "tag gain at the fundamental, dBi");
    lb->add_option("--gtag2-dbi", o.gn_dbi, "tag gain at the harmonic, dBi");
    lb->add_option("--n", o.harmonic, "harmonic number");
    lb->add_option("--ranges", o.ranges, "ranges for the power table, m")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: usage: " << e.what() << '\n';
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return exit_code(ErrorCategory::usage);
    }

    try {
        const auto settings = build_settings(o);
        if (sim->parsed()) {
            return cmd_simulate(o, settings, out);
        }
        if (trn->parsed()) {
            return cmd_train(o, settings, out);
        }
        if (evl->parsed()) {
            return cmd_eval(o, settings, out);
        }
        if (cls->parsed()) {
            return cmd_classify(o, settings, out);
        }
        if (str->parsed()) {
            return cmd_stream(o, settings, out, err);
        }
        return cmd_linkbudget(o, settings, out);
    } catch (const Error& e) {
        err << "error: " << to_string(e.category()) << ": " << e.what() << '\n';
        if (e.category() == ErrorCategory::usage) {
            const auto subs = app.get_subcommands();
            err << (subs.empty() ? app.help() : subs.front()->help());
        }
        return exit_code(e.category());
    } catch (const std::exception& e) {
        err << "error: internal: " << e.what() << '\n';
        return kInternalErrorExit;
    }
}

}  // namespace harmodop::runtime
