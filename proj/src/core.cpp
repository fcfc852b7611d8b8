#include "pcgkit/core.hpp"

#include "pcgkit/errors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace pcgkit {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

std::string_view to_string(MicKind kind) { return kind == MicKind::HM ? "HM" : "NM"; }

std::string_view to_string(Label label) { return label == Label::CAD ? "CAD" : "NOR"; }

namespace {

std::string upper(std::string_view s) {
    std::string out(s);
    std::ranges::transform(out, out.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

} // namespace

Label parse_label(std::string_view text) {
    const auto u = upper(trim(text));
    if (u == "CAD" || u == "1") return Label::CAD;
    if (u == "NOR" || u == "0") return Label::NOR;
    throw FormatError("unknown label '" + std::string(text) + "'");
}

ChannelKind::ChannelKind(MicKind k, int steth) : kind(k), stethoscope(steth) {
    if (steth < 1 || steth > 7) throw ConfigError("stethoscope index must be in 1..7, got " + std::to_string(steth));
}

std::string ChannelKind::token() const { return std::string(to_string(kind)) + ":" + std::to_string(stethoscope); }

ChannelKind ChannelKind::parse(std::string_view token) {
    const auto colon = token.find(':');
    if (colon == std::string_view::npos) throw FormatError("channel token '" + std::string(token) + "' lacks ':'");
    const auto kind = upper(trim(token.substr(0, colon)));
    MicKind mic;
    if (kind == "HM") mic = MicKind::HM;
    else if (kind == "NM") mic = MicKind::NM;
    else throw FormatError("unknown microphone kind '" + kind + "'");
    const auto idx_text = std::string(trim(token.substr(colon + 1)));
    int idx = 0;
    try {
        std::size_t used = 0;
        idx = std::stoi(idx_text, &used);
        if (used != idx_text.size()) throw std::invalid_argument(idx_text);
    } catch (const std::exception&) {
        throw FormatError("bad stethoscope index '" + idx_text + "'");
    }
    if (idx < 1 || idx > 7) throw FormatError("stethoscope index out of range in '" + std::string(token) + "'");
    return ChannelKind(mic, idx);
}

// ---------------------------------------------------------------------------

Recording::Recording(std::string subject_id, Label label, int fs, std::vector<Channel> channels,
                     std::vector<std::size_t> join_markers)
    : subject_id_(std::move(subject_id)), label_(label), fs_(fs), channels_(std::move(channels)),
      join_markers_(std::move(join_markers)) {
    if (fs_ <= 0) throw ConfigError("sample rate must be positive");
    if (channels_.empty()) throw DataError("recording '" + subject_id_ + "' has no channels");
    length_ = channels_.front().samples.size();
    std::set<ChannelKind> seen;
    for (const auto& ch : channels_) {
        if (ch.samples.size() != length_)
            throw IncompatibleError("recording '" + subject_id_ + "': channel " + ch.kind.token() +
                                    " has a different length");
        if (!seen.insert(ch.kind).second)
            throw DataError("recording '" + subject_id_ + "': duplicate channel " + ch.kind.token());
    }
    for (std::size_t i = 0; i < join_markers_.size(); ++i) {
        if (join_markers_[i] >= length_ || (i > 0 && join_markers_[i] <= join_markers_[i - 1]))
            throw DataError("recording '" + subject_id_ + "': join markers must be increasing and in range");
    }
}

int Recording::find(const ChannelKind& kind) const {
    for (std::size_t i = 0; i < channels_.size(); ++i)
        if (channels_[i].kind == kind) return static_cast<int>(i);
    return -1;
}

const Channel& Recording::channel(const ChannelKind& kind) const {
    const int i = find(kind);
    if (i < 0) throw ConfigError("recording '" + subject_id_ + "' has no channel " + kind.token());
    return channels_[static_cast<std::size_t>(i)];
}

std::vector<ChannelKind> Recording::channel_kinds() const {
    std::vector<ChannelKind> kinds;
    kinds.reserve(channels_.size());
    for (const auto& ch : channels_) kinds.push_back(ch.kind);
    return kinds;
}

Recording concatenate_takes(std::span<const Recording> takes) {
    if (takes.empty()) throw DataError("concatenate_takes: no takes");
    const auto& first = takes.front();
    const auto kinds = first.channel_kinds();
    std::vector<Channel> channels;
    for (const auto& k : kinds) channels.push_back(Channel{k, {}});
    std::vector<std::size_t> joins;
    std::size_t offset = 0;
    for (std::size_t t = 0; t < takes.size(); ++t) {
        const auto& take = takes[t];
        if (take.fs() != first.fs())
            throw IncompatibleError("take " + std::to_string(t) + " of '" + first.subject_id() +
                                    "' has a different sample rate");
        if (take.subject_id() != first.subject_id() || take.label() != first.label())
            throw IncompatibleError("takes belong to different subjects or labels");
        auto take_kinds = take.channel_kinds();
        if (std::set(take_kinds.begin(), take_kinds.end()) != std::set(kinds.begin(), kinds.end()))
            throw IncompatibleError("take " + std::to_string(t) + " of '" + first.subject_id() +
                                    "' has a different channel set");
        if (t > 0) joins.push_back(offset);
        // Markers already inside a take (from an earlier concatenation) carry over.
        for (auto m : take.join_markers()) joins.push_back(offset + m);
        for (auto& ch : channels) {
            const auto& src = take.channel(ch.kind).samples;
            ch.samples.insert(ch.samples.end(), src.begin(), src.end());
        }
        offset += take.length();
    }
    return Recording(first.subject_id(), first.label(), first.fs(), std::move(channels), std::move(joins));
}

// ---------------------------------------------------------------------------
// WAV

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const unsigned char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

template <typename T>
void put_le(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

} // namespace

WavData load_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open WAV file " + path.string());
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto where = " in " + path.string();
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw FormatError("missing RIFF/WAVE header" + where);

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t fs = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const auto size = read_le<std::uint32_t>(chunk + 4);
        const std::size_t body = pos + 8;
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16 || body + size > bytes.size()) throw FormatError("truncated fmt chunk" + where);
            format = read_le<std::uint16_t>(bytes.data() + body);
            channels = read_le<std::uint16_t>(bytes.data() + body + 2);
            fs = read_le<std::uint32_t>(bytes.data() + body + 4);
            bits = read_le<std::uint16_t>(bytes.data() + body + 14);
            if (format == kFormatExtensible) {
                if (size < 40) throw FormatError("truncated extensible fmt chunk" + where);
                format = read_le<std::uint16_t>(bytes.data() + body + 24);
            }
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            if (!have_fmt) throw FormatError("data chunk precedes fmt chunk" + where);
            data = bytes.data() + body;
            data_len = std::min<std::size_t>(size, bytes.size() - body);
            break;
        }
        pos = body + size + (size & 1U);
    }
    if (!have_fmt) throw FormatError("missing fmt chunk" + where);
    if (data == nullptr) throw FormatError("missing data chunk" + where);
    if (channels != 1) throw UnsupportedError("only mono WAV is supported (" + std::to_string(channels) + " channels)" + where);
    if (fs == 0) throw FormatError("zero sample rate" + where);

    WavData out;
    out.fs = static_cast<int>(fs);
    if (format == kFormatPcm && bits == 16) {
        const std::size_t n = data_len / 2;
        out.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) out.samples[i] = read_le<std::int16_t>(data + 2 * i) / 32768.0;
    } else if (format == kFormatFloat && bits == 32) {
        const std::size_t n = data_len / 4;
        out.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) out.samples[i] = read_le<float>(data + 4 * i);
    } else {
        throw UnsupportedError("unsupported WAV encoding (format " + std::to_string(format) + ", " +
                               std::to_string(bits) + " bits)" + where);
    }
    return out;
}

void write_wav(const std::filesystem::path& path, int fs, std::span<const double> samples, WavEncoding encoding) {
    if (fs <= 0) throw ConfigError("sample rate must be positive");
    const bool pcm = encoding == WavEncoding::Pcm16;
    const std::uint16_t bits = pcm ? 16 : 32;
    const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * (bits / 8));

    std::string out;
    out.reserve(44 + data_len);
    out += "RIFF";
    put_le<std::uint32_t>(out, 36 + data_len);
    out += "WAVEfmt ";
    put_le<std::uint32_t>(out, 16);
    put_le<std::uint16_t>(out, pcm ? kFormatPcm : kFormatFloat);
    put_le<std::uint16_t>(out, 1);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(fs));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(fs) * (bits / 8));
    put_le<std::uint16_t>(out, bits / 8);
    put_le<std::uint16_t>(out, bits);
    out += "data";
    put_le<std::uint32_t>(out, data_len);
    for (double x : samples) {
        if (pcm) {
            const double clipped = std::clamp(x, -1.0, 1.0);
            const auto q = static_cast<long>(std::lround(clipped * 32767.0));
            put_le<std::int16_t>(out, static_cast<std::int16_t>(q));
        } else {
            put_le<float>(out, static_cast<float>(x));
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write WAV file " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("failed writing WAV file " + path.string());
}

// ---------------------------------------------------------------------------
// Manifest

SubjectManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir) {
    struct Building {
        ManifestEntry entry;
        std::map<int, TakeFiles> takes;
    };
    std::vector<Building> subjects;
    std::map<std::string, std::size_t> index;

    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto tab = line.find('\t', start);
            fields.emplace_back(trim(std::string_view(line).substr(start, tab - start)));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        const auto at = " (manifest line " + std::to_string(lineno) + ")";
        if (fields.size() != 5) throw FormatError("expected 5 tab-separated fields" + at);
        if (fields[0].empty()) throw FormatError("empty subject id" + at);
        if (fields[4].empty()) throw FormatError("missing file path" + at);
        Label label;
        ChannelKind kind;
        int take = 0;
        try {
            label = parse_label(fields[1]);
            kind = ChannelKind::parse(fields[3]);
            std::size_t used = 0;
            take = std::stoi(fields[2], &used);
            if (used != fields[2].size()) throw FormatError("bad take index");
        } catch (const FormatError& e) {
            throw FormatError(std::string(e.what()) + at);
        } catch (const std::exception&) {
            throw FormatError("bad take index '" + fields[2] + "'" + at);
        }

        auto [it, inserted] = index.try_emplace(fields[0], subjects.size());
        if (inserted) {
            subjects.push_back(Building{});
            subjects.back().entry.subject_id = fields[0];
            subjects.back().entry.label = label;
        }
        auto& subject = subjects[it->second];
        if (subject.entry.label != label) throw FormatError("subject '" + fields[0] + "' has conflicting labels" + at);
        auto& files = subject.takes[take];
        files.take_index = take;
        for (const auto& [k, _] : files.files)
            if (k == kind) throw FormatError("duplicate channel " + kind.token() + " for subject '" + fields[0] + "'" + at);
        std::filesystem::path p(fields[4]);
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        files.files.emplace_back(kind, p);
    }

    SubjectManifest manifest;
    std::set<ChannelKind> reference;
    bool have_reference = false;
    for (auto& s : subjects) {
        for (auto& [take_index, files] : s.takes) {
            std::ranges::sort(files.files, [](const auto& a, const auto& b) { return a.first < b.first; });
            std::set<ChannelKind> kinds;
            for (const auto& f : files.files) kinds.insert(f.first);
            if (!have_reference) {
                reference = kinds;
                have_reference = true;
            } else if (kinds != reference) {
                throw FormatError("subject '" + s.entry.subject_id + "' take " + std::to_string(take_index) +
                                  " lists a different channel set (" + std::to_string(kinds.size()) + " vs " +
                                  std::to_string(reference.size()) + " channels)");
            }
            s.entry.takes.push_back(std::move(files));
        }
        manifest.entries.push_back(std::move(s.entry));
    }
    return manifest;
}

SubjectManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str(), path.parent_path());
}

Recording load_subject(const ManifestEntry& entry) {
    std::vector<Recording> takes;
    for (const auto& take : entry.takes) {
        std::vector<Channel> channels;
        int fs = 0;
        for (const auto& [kind, path] : take.files) {
            auto wav = load_wav(path);
            if (fs != 0 && wav.fs != fs)
                throw IncompatibleError("subject '" + entry.subject_id + "': channel files disagree on sample rate");
            fs = wav.fs;
            channels.push_back(Channel{kind, std::move(wav.samples)});
        }
        takes.emplace_back(entry.subject_id, entry.label, fs, std::move(channels));
    }
    return concatenate_takes(takes);
}

} // namespace pcgkit
