#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pcgkit {

enum class MicKind { HM, NM };

/// CAD is the positive class everywhere (metrics, tie-breaks).
enum class Label : std::uint8_t { NOR = 0, CAD = 1 };

std::string_view to_string(MicKind kind);
std::string_view to_string(Label label);

/// Case-insensitive; throws FormatError on anything but CAD/NOR (or 1/0).
Label parse_label(std::string_view text);

/// Which microphone of which stethoscope a buffer came from.
struct ChannelKind {
    MicKind kind = MicKind::HM;
    int stethoscope = 1;

    ChannelKind() = default;
    ChannelKind(MicKind k, int steth);

    /// "HM:2" style token used by manifests and file names.
    std::string token() const;
    static ChannelKind parse(std::string_view token);

    friend bool operator==(const ChannelKind&, const ChannelKind&) = default;
    friend auto operator<=>(const ChannelKind&, const ChannelKind&) = default;
};

struct Channel {
    ChannelKind kind;
    std::vector<double> samples;
};

/// Inclusive sample-index range.
struct Interval {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - start + 1; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

/**
 * One subject's synchronized multichannel recording.
 *
 * All channel buffers share one length; join markers record where separate
 * takes were concatenated. Immutable after construction.
 */
class Recording {
public:
    Recording(std::string subject_id, Label label, int fs, std::vector<Channel> channels,
              std::vector<std::size_t> join_markers = {});

    const std::string& subject_id() const { return subject_id_; }
    Label label() const { return label_; }
    int fs() const { return fs_; }
    std::size_t length() const { return length_; }
    double duration() const { return static_cast<double>(length_) / fs_; }
    const std::vector<Channel>& channels() const { return channels_; }
    const std::vector<std::size_t>& join_markers() const { return join_markers_; }

    /// Index of the channel with the given kind, or -1.
    int find(const ChannelKind& kind) const;
    const Channel& channel(const ChannelKind& kind) const;
    std::vector<ChannelKind> channel_kinds() const;

private:
    std::string subject_id_;
    Label label_;
    int fs_;
    std::size_t length_ = 0;
    std::vector<Channel> channels_;
    std::vector<std::size_t> join_markers_;
};

/// Concatenate takes in order. Join markers land on every take boundary.
Recording concatenate_takes(std::span<const Recording> takes);

// ---------------------------------------------------------------------------
// WAV I/O

struct WavData {
    int fs = 0;
    std::vector<double> samples;
};

enum class WavEncoding { Pcm16, Float32 };

/// Mono RIFF WAV, PCM16 or IEEE float32. PCM samples are scaled to [-1, 1].
WavData load_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, int fs, std::span<const double> samples,
               WavEncoding encoding = WavEncoding::Float32);

// ---------------------------------------------------------------------------
// Manifest

struct TakeFiles {
    int take_index = 0;
    std::vector<std::pair<ChannelKind, std::filesystem::path>> files;
};

struct ManifestEntry {
    std::string subject_id;
    Label label = Label::NOR;
    std::vector<TakeFiles> takes; // sorted by take_index
};

struct SubjectManifest {
    std::vector<ManifestEntry> entries; // in first-appearance order
};

/**
 * Parse a manifest: one `subject<TAB>label<TAB>take<TAB>KIND:steth<TAB>path`
 * record per line. Relative paths resolve against the manifest's directory.
 * Blank lines and lines starting with '#' are skipped.
 */
SubjectManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir = {});
SubjectManifest load_manifest(const std::filesystem::path& path);

/// Load every take of one subject and concatenate them.
Recording load_subject(const ManifestEntry& entry);

} // namespace pcgkit
