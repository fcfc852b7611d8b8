#pragma once

#include "pcgkit/core.hpp"
#include "pcgkit/features.hpp"
#include "pcgkit/noise_gate.hpp"
#include "pcgkit/objective.hpp"
#include "pcgkit/preprocess.hpp"
#include "pcgkit/segmenter.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace pcgkit {

inline constexpr int kConfigSchemaVersion = 1;

struct SynthDatasetConfig {
    std::size_t n_subjects = 20;
    double cad_fraction = 0.5;
    int fs = 4000;
    double duration = 60.0; ///< seconds per take
    int takes_max = 2;      ///< each subject gets 1..takes_max takes
    int events_max = 2;     ///< noise events per take, 0..events_max
    double event_gain_min = 5.0;
    double event_gain_max = 10.0;
    double murmur_gain = 0.15; ///< CAD subjects only
};

struct SplitConfig {
    int folds = 5;
    int fold = 0; ///< test fold; validation is the next fold
};

/**
 * Every tunable of the batch pipeline. Loaded from a flat `key = value`
 * file; unknown keys are rejected. The hash of the canonical form is
 * embedded in every artifact.
 */
struct PipelineConfig {
    std::uint64_t seed = 1;
    std::size_t f_base = 61;
    GateConfig gate;
    PreprocessConfig preprocess;
    SegmentConfig segment;
    MfccConfig mfcc;
    LossWeights loss;
    SplitConfig split;
    SynthDatasetConfig synth;
    std::vector<ChannelKind> feature_channels; ///< empty: every HM channel in stethoscope order

    static PipelineConfig parse(std::string_view text);
    static PipelineConfig load(const std::filesystem::path& path);
    void set(const std::string& key, const std::string& value);
    std::string canonical() const;
    std::string hash() const;
};

/// Runs fn(i) for i in [0, n) on at most `jobs` threads. The first exception
/// thrown by any task is rethrown after all workers finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// synth

struct SynthSummary {
    std::filesystem::path manifest;
    std::size_t subjects = 0;
    std::size_t cad = 0;
};

/// Writes subjects/<id>/take<k>_<HMn|NMn>.wav, per-take truth intervals and manifest.tsv.
SynthSummary cmd_synth(const PipelineConfig& cfg, const std::filesystem::path& out_dir, int jobs = 1);

// ---------------------------------------------------------------------------
// condition

struct ConditionEntry {
    std::string subject_id;
    Label label = Label::NOR;
    std::string status; ///< ok, skip (no usable clean segment) or fail
    std::string message;
    std::size_t length = 0;
    double rejected_fraction = 0.0;
};

struct ConditionSummary {
    std::vector<ConditionEntry> entries; ///< manifest order
    std::size_t count(const std::string& status) const;
};

/**
 * Per subject: concatenate takes, gate on raw audio, then spike removal,
 * bandpass and k-peak normalisation of every channel. Writes
 * <id>/{clean,noisy}.intervals, <id>/<HMn|NMn>.wav, conditioned.tsv and
 * condition_summary.tsv. A failing subject does not stop the run.
 */
ConditionSummary cmd_condition(const std::filesystem::path& manifest, const PipelineConfig& cfg,
                               const std::filesystem::path& out_dir, int jobs = 1);

// ---------------------------------------------------------------------------
// featurize

struct SubjectRef {
    std::string subject_id;
    Label label = Label::NOR;
};

struct SubjectSplits {
    std::vector<SubjectRef> train, val, test;
};

/// Stratified subject-level k-fold assignment: test = fold, val = fold+1.
SubjectSplits make_splits(std::vector<SubjectRef> subjects, const SplitConfig& split, std::uint64_t seed);

struct FeaturizeSummary {
    std::map<std::string, std::map<Label, std::size_t>> fragments; ///< split -> label -> count
    std::vector<std::string> excluded;                             ///< "split subject reason"
    ClassTargets train_targets;
};

/**
 * Plan and cut fragments for every split, compute fused MFCCs and write
 * <split>.feat / .idx / .truth / .plan plus norm_stats.txt. Training
 * subjects get class-balanced targets; validation and test use f_base for
 * both classes.
 */
FeaturizeSummary cmd_featurize(const std::filesystem::path& conditioned_dir, const PipelineConfig& cfg,
                               const std::filesystem::path& out_dir, int jobs = 1);

// ---------------------------------------------------------------------------
// evaluate

struct FragmentLabel {
    std::string subject_id;
    std::size_t fragment_index = 0;
    Label label = Label::NOR;
};

/// `subject_id fragment_index label` per line.
std::vector<FragmentLabel> read_fragment_labels(const std::filesystem::path& path);
void write_fragment_labels(const std::filesystem::path& path, const std::vector<FragmentLabel>& rows);

struct EvaluateResult {
    EvalReport fragment;
    EvalReport subject;
};

EvaluateResult evaluate_predictions(const std::vector<FragmentLabel>& preds, const std::vector<FragmentLabel>& truth);
EvaluateResult cmd_evaluate(const std::filesystem::path& pred_file, const std::filesystem::path& truth_file,
                            const std::filesystem::path& out_dir);

} // namespace pcgkit
