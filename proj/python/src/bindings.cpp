// Python bindings. Labels cross the boundary as ints (0 = NOR, 1 = CAD);
// interval sets come back as (n, 2) arrays of inclusive [start, end].

#include "pcgkit/errors.hpp"
#include "pcgkit/pipeline.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>

namespace py = pybind11;
using namespace pcgkit;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::span<const double> view(const DoubleArray& a) {
    if (a.ndim() != 1) throw py::value_error("expected a 1-D array");
    return {a.data(), static_cast<std::size_t>(a.size())};
}

py::array_t<double> to_array(std::vector<double> v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::array_t<double> to_array(const Matrix& m) {
    py::array_t<double> out({static_cast<py::ssize_t>(m.rows), static_cast<py::ssize_t>(m.cols)});
    std::copy(m.data.begin(), m.data.end(), out.mutable_data());
    return out;
}

Matrix to_matrix(const DoubleArray& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
    Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.data.begin());
    return m;
}

py::array_t<std::int64_t> to_array(const IntervalSet& set) {
    py::array_t<std::int64_t> out({static_cast<py::ssize_t>(set.size()), py::ssize_t{2}});
    auto r = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < set.size(); ++i) {
        r(i, 0) = static_cast<std::int64_t>(set.intervals()[i].start);
        r(i, 1) = static_cast<std::int64_t>(set.intervals()[i].end);
    }
    return out;
}

std::vector<Label> to_labels(const py::array_t<int, py::array::c_style | py::array::forcecast>& y) {
    std::vector<Label> out;
    out.reserve(static_cast<std::size_t>(y.size()));
    for (py::ssize_t i = 0; i < y.size(); ++i) {
        const int v = y.data()[i];
        if (v != 0 && v != 1) throw py::value_error("labels must be 0 (NOR) or 1 (CAD)");
        out.push_back(static_cast<Label>(v));
    }
    return out;
}

Recording to_recording(const std::map<std::string, DoubleArray>& channels, int fs,
                       const std::vector<std::size_t>& joins) {
    std::vector<Channel> chans;
    for (const auto& [token, samples] : channels) {
        const auto s = view(samples);
        chans.push_back({ChannelKind::parse(token), {s.begin(), s.end()}});
    }
    return Recording("py", Label::NOR, fs, std::move(chans), joins);
}

py::dict report_dict(const EvalReport& r) {
    py::dict d;
    d["tp"] = r.counts.tp, d["tn"] = r.counts.tn, d["fp"] = r.counts.fp, d["fn"] = r.counts.fn;
    d["acc"] = r.acc, d["uar"] = r.uar, d["tpr"] = r.tpr, d["tnr"] = r.tnr;
    d["f1_pos"] = r.f1_pos, d["f1_neg"] = r.f1_neg, d["mcc"] = r.mcc;
    return d;
}

py::dict record_dict(const FeatureRecord& rec) {
    py::dict d;
    d["subject_id"] = rec.features.subject_id;
    d["label"] = static_cast<int>(rec.features.label);
    d["start"] = rec.features.start;
    d["fs"] = rec.fs;
    d["config_hash"] = rec.config_hash;
    d["values"] = to_array(rec.features.values);
    return d;
}

} // namespace

PYBIND11_MODULE(_pcgkit, m) {
    m.doc() = "pcgkit native core";

    static py::exception<Error> base(m, "Error");
    static py::exception<ConfigError> config_error(m, "ConfigError", base.ptr());
    static py::exception<DataError> data_error(m, "DataError", base.ptr());
    static py::exception<ContractError> contract_error(m, "ContractError", base.ptr());
    static py::exception<InvariantError> invariant_error(m, "InvariantError", base.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            py::set_error(config_error, e.what());
        } catch (const DataError& e) {
            py::set_error(data_error, e.what());
        } catch (const ContractError& e) {
            py::set_error(contract_error, e.what());
        } catch (const InvariantError& e) {
            py::set_error(invariant_error, e.what());
        } catch (const Error& e) {
            py::set_error(base, e.what());
        }
    });

    py::class_<GateConfig>(m, "GateConfig")
        .def(py::init<>())
        .def_readwrite("frame_len_hm", &GateConfig::frame_len_hm)
        .def_readwrite("frame_len_nm", &GateConfig::frame_len_nm)
        .def_readwrite("threshold", &GateConfig::threshold)
        .def_readwrite("nm_channel", &GateConfig::nm_channel)
        .def_readwrite("boundary_flag", &GateConfig::boundary_flag);

    py::class_<PreprocessConfig>(m, "PreprocessConfig")
        .def(py::init<>())
        .def_readwrite("band_low", &PreprocessConfig::band_low)
        .def_readwrite("band_high", &PreprocessConfig::band_high)
        .def_readwrite("filter_order", &PreprocessConfig::filter_order)
        .def_readwrite("spike_window", &PreprocessConfig::spike_window)
        .def_readwrite("spike_ratio", &PreprocessConfig::spike_ratio)
        .def_readwrite("k_peaks", &PreprocessConfig::k_peaks)
        .def_readwrite("peak_min_separation", &PreprocessConfig::peak_min_separation);

    py::class_<MfccConfig>(m, "MfccConfig")
        .def(py::init<>())
        .def_readwrite("n_mfcc", &MfccConfig::n_mfcc)
        .def_readwrite("n_mels", &MfccConfig::n_mels)
        .def_readwrite("f_min", &MfccConfig::f_min)
        .def_readwrite("f_max", &MfccConfig::f_max)
        .def_readwrite("win_len", &MfccConfig::win_len)
        .def_readwrite("hop", &MfccConfig::hop)
        .def_readwrite("log_floor", &MfccConfig::log_floor)
        .def("canonical", &MfccConfig::canonical);

    py::class_<LossWeights>(m, "LossWeights")
        .def(py::init<>())
        .def_readwrite("alpha", &LossWeights::alpha)
        .def_readwrite("beta", &LossWeights::beta)
        .def_readwrite("lambda_c", &LossWeights::lambda_c)
        .def_readwrite("temperature", &LossWeights::temperature);

    py::class_<PipelineConfig>(m, "PipelineConfig")
        .def(py::init<>())
        .def_static("parse", &PipelineConfig::parse)
        .def_static("load", &PipelineConfig::load)
        .def("set", &PipelineConfig::set)
        .def("canonical", &PipelineConfig::canonical)
        .def("hash", &PipelineConfig::hash)
        .def_readwrite("seed", &PipelineConfig::seed)
        .def_readwrite("f_base", &PipelineConfig::f_base)
        .def_readwrite("gate", &PipelineConfig::gate)
        .def_readwrite("preprocess", &PipelineConfig::preprocess)
        .def_readwrite("mfcc", &PipelineConfig::mfcc)
        .def_readwrite("loss", &PipelineConfig::loss);

    // noise gate
    m.def("frame_samples", &frame_samples, py::arg("fs"), py::arg("frame_seconds"));
    m.def(
        "flag_noisy_frames",
        [](const DoubleArray& x, double fs, double frame_seconds, double threshold) {
            return to_array(flag_noisy_frames(view(x), fs, frame_seconds, threshold));
        },
        py::arg("x"), py::arg("fs"), py::arg("frame_seconds"), py::arg("threshold") = 2.5);
    m.def(
        "detect_clean_intervals",
        [](const std::map<std::string, DoubleArray>& channels, int fs, const GateConfig& cfg,
           const std::vector<std::size_t>& joins) {
            return to_array(detect_clean_intervals(to_recording(channels, fs, joins), cfg));
        },
        py::arg("channels"), py::arg("fs"), py::arg("config") = GateConfig{},
        py::arg("joins") = std::vector<std::size_t>{},
        "channels maps tokens such as 'HM:1' or 'NM:4' to equal-length sample arrays");

    // preprocessing
    m.def(
        "bandpass", [](const DoubleArray& x, double fs, const PreprocessConfig& cfg) { return to_array(bandpass(view(x), fs, cfg)); },
        py::arg("x"), py::arg("fs"), py::arg("config") = PreprocessConfig{});
    m.def(
        "remove_spikes",
        [](const DoubleArray& x, double fs, const PreprocessConfig& cfg) { return to_array(remove_spikes(view(x), fs, cfg)); },
        py::arg("x"), py::arg("fs"), py::arg("config") = PreprocessConfig{});
    m.def(
        "kpeak_normalize",
        [](const DoubleArray& x, double fs, const PreprocessConfig& cfg) {
            auto r = kpeak_normalize(view(x), fs, cfg);
            return py::make_tuple(to_array(std::move(r.samples)), r.scale);
        },
        py::arg("x"), py::arg("fs"), py::arg("config") = PreprocessConfig{});
    m.def(
        "condition_channel",
        [](const DoubleArray& x, double fs, const PreprocessConfig& cfg) { return to_array(condition_channel(view(x), fs, cfg)); },
        py::arg("x"), py::arg("fs"), py::arg("config") = PreprocessConfig{});
    m.def(
        "butterworth_sos",
        [](int order, double f_low, double f_high, double fs) {
            const auto sos = design_butterworth_bandpass(order, f_low, f_high, fs);
            py::list rows;
            for (const auto& s : sos) rows.append(py::make_tuple(s.b[0], s.b[1], s.b[2], s.a[0], s.a[1], s.a[2]));
            return rows;
        },
        py::arg("order"), py::arg("f_low"), py::arg("f_high"), py::arg("fs"),
        "second-order sections as (b0, b1, b2, a0, a1, a2) rows");

    // segmentation arithmetic
    m.def(
        "class_targets",
        [](std::size_t n_cad, std::size_t n_nor, std::size_t f_base) {
            const auto t = class_targets(n_cad, n_nor, f_base);
            return py::make_tuple(t.cad, t.nor);
        },
        py::arg("n_cad"), py::arg("n_nor"), py::arg("f_base"), "returns (cad, nor) fragment targets per subject");
    m.def(
        "allocate_fragments",
        [](const std::vector<std::size_t>& lengths, std::size_t f_class) { return allocate_fragments(lengths, f_class); },
        py::arg("lengths"), py::arg("f_class"));
    m.def("fragment_starts", &fragment_starts, py::arg("segment_len"), py::arg("frag_len"), py::arg("count"));

    // features
    m.def(
        "mfcc", [](const DoubleArray& x, double fs, const MfccConfig& cfg) { return to_array(mfcc(view(x), fs, cfg)); },
        py::arg("x"), py::arg("fs"), py::arg("config") = MfccConfig{}, "frames x n_mfcc");
    m.def(
        "stft_power", [](const DoubleArray& x, const MfccConfig& cfg) { return to_array(stft_power(view(x), cfg)); },
        py::arg("x"), py::arg("config") = MfccConfig{}, "frames x (win_len/2 + 1)");
    m.def("fnv1a_hex", [](const std::string& s) { return fnv1a_hex(s); }, py::arg("text"));
    m.def(
        "read_feature_file",
        [](const std::filesystem::path& path) {
            std::ifstream in(path, std::ios::binary);
            if (!in) throw DataError("cannot open " + path.string());
            py::list out;
            while (in.peek() != std::ifstream::traits_type::eof()) out.append(record_dict(read_feature_record(in)));
            return out;
        },
        py::arg("path"), "every record of a .feat file as dicts with a float64 'values' array");

    // objective
    using LabelArray = py::array_t<int, py::array::c_style | py::array::forcecast>;
    m.def(
        "supervised_contrastive_loss",
        [](const DoubleArray& z, const LabelArray& y, double temperature, bool exclude_self) {
            return supervised_contrastive_loss(to_matrix(z), to_labels(y), temperature, {exclude_self});
        },
        py::arg("z"), py::arg("y"), py::arg("temperature"), py::arg("exclude_self") = false);
    m.def(
        "center_loss",
        [](const DoubleArray& z, const LabelArray& y, const DoubleArray& centers) {
            return center_loss(to_matrix(z), to_labels(y), to_matrix(centers));
        },
        py::arg("z"), py::arg("y"), py::arg("centers"));
    m.def(
        "cross_entropy",
        [](const DoubleArray& logits, const LabelArray& y) { return cross_entropy(to_matrix(logits), to_labels(y)); },
        py::arg("logits"), py::arg("y"));
    m.def(
        "hybrid_loss",
        [](const DoubleArray& z, const LabelArray& y, const DoubleArray& logits, const DoubleArray& centers,
           const LossWeights& w, bool exclude_self) {
            const auto h = hybrid_loss(to_matrix(z), to_labels(y), to_matrix(logits), to_matrix(centers), w,
                                       {exclude_self});
            py::dict d;
            d["total"] = h.total, d["contrastive"] = h.contrastive, d["cross_entropy"] = h.cross_entropy,
            d["center"] = h.center;
            return d;
        },
        py::arg("z"), py::arg("y"), py::arg("logits"), py::arg("centers"), py::arg("weights") = LossWeights{},
        py::arg("exclude_self") = false);
    m.def(
        "hybrid_loss_gradient",
        [](const DoubleArray& z, const LabelArray& y, const DoubleArray& logits, const DoubleArray& centers,
           const LossWeights& w, bool exclude_self) {
            const auto g = hybrid_loss_gradient(to_matrix(z), to_labels(y), to_matrix(logits), to_matrix(centers), w,
                                                {exclude_self});
            py::dict d;
            d["embeddings"] = to_array(g.embeddings), d["logits"] = to_array(g.logits),
            d["centers"] = to_array(g.centers);
            return d;
        },
        py::arg("z"), py::arg("y"), py::arg("logits"), py::arg("centers"), py::arg("weights") = LossWeights{},
        py::arg("exclude_self") = false);

    // metrics
    m.def(
        "metrics",
        [](std::size_t tp, std::size_t tn, std::size_t fp, std::size_t fn) {
            return report_dict(metrics_from_counts({tp, tn, fp, fn}));
        },
        py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));
    m.def(
        "confusion_metrics",
        [](const LabelArray& pred, const LabelArray& truth) {
            return report_dict(metrics_from_counts(confusion_counts(to_labels(pred), to_labels(truth))));
        },
        py::arg("pred"), py::arg("truth"));
    m.def(
        "majority_vote",
        [](const std::map<std::string, LabelArray>& preds) {
            std::map<std::string, std::vector<Label>> in;
            for (const auto& [k, v] : preds) in[k] = to_labels(v);
            std::map<std::string, int> out;
            for (const auto& [k, v] : majority_vote(in)) out[k] = static_cast<int>(v);
            return out;
        },
        py::arg("fragment_preds"));
    m.def("selection_score", &selection_score, py::arg("train_mcc"), py::arg("val_mcc"));

    // batch pipeline
    m.def(
        "synth",
        [](const PipelineConfig& cfg, const std::filesystem::path& out, int jobs) {
            py::gil_scoped_release release;
            return cmd_synth(cfg, out, jobs).manifest;
        },
        py::arg("config"), py::arg("out_dir"), py::arg("jobs") = 1, "returns the manifest path");
    m.def(
        "condition",
        [](const std::filesystem::path& manifest, const PipelineConfig& cfg, const std::filesystem::path& out,
           int jobs) {
            ConditionSummary s;
            {
                py::gil_scoped_release release;
                s = cmd_condition(manifest, cfg, out, jobs);
            }
            std::map<std::string, std::string> status;
            for (const auto& e : s.entries) status[e.subject_id] = e.status;
            return status;
        },
        py::arg("manifest"), py::arg("config"), py::arg("out_dir"), py::arg("jobs") = 1,
        "returns subject -> ok / skip / fail");
    m.def(
        "featurize",
        [](const std::filesystem::path& in, const PipelineConfig& cfg, const std::filesystem::path& out, int jobs) {
            FeaturizeSummary s;
            {
                py::gil_scoped_release release;
                s = cmd_featurize(in, cfg, out, jobs);
            }
            py::dict d;
            for (const auto& [split, by_label] : s.fragments) {
                py::dict counts;
                for (const auto& [label, n] : by_label) counts[py::str(std::string(to_string(label)))] = n;
                d[py::str(split)] = counts;
            }
            return d;
        },
        py::arg("conditioned_dir"), py::arg("config"), py::arg("out_dir"), py::arg("jobs") = 1,
        "returns split -> {'CAD': n, 'NOR': n} fragment counts");
    m.def(
        "evaluate",
        [](const std::filesystem::path& pred, const std::filesystem::path& truth, const std::filesystem::path& out) {
            const auto r = cmd_evaluate(pred, truth, out);
            return py::make_tuple(report_dict(r.fragment), report_dict(r.subject));
        },
        py::arg("pred_file"), py::arg("truth_file"), py::arg("out_dir"), "returns (fragment, subject) metric dicts");
}
