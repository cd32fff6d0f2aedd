#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "sat/audio.hpp"
#include "sat/error.hpp"

namespace sat {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

std::uint16_t read_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
    out.insert(out.end(), tag, tag + 4);
}

struct FmtChunk {
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits_per_sample = 0;
};

} // namespace

void AudioBuffer::validate() const {
    if (sample_rate_hz != kSampleRateHz) {
        throw AudioError("sample_rate_hz must be 16000 (got " + std::to_string(sample_rate_hz) +
                         "); resample the input to 16 kHz first");
    }
    if (channel_count != 1) {
        throw AudioError("channel_count must be 1 (got " + std::to_string(channel_count) +
                         "); downmix the input to mono first");
    }
    for (float s : samples) {
        if (!std::isfinite(s)) throw AudioError("audio contains non-finite samples");
    }
}

AudioBuffer parse_wav(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw AudioError("not a RIFF/WAVE file");
    }

    FmtChunk fmt;
    bool have_fmt = false;
    const std::uint8_t* data = nullptr;
    std::size_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint8_t* chunk = bytes.data() + pos;
        const std::uint32_t size = read_u32(chunk + 4);
        const std::size_t body = pos + 8;
        const std::size_t available = bytes.size() - body;
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16 || size > available) throw AudioError("malformed fmt chunk");
            fmt.format = read_u16(chunk + 8);
            fmt.channels = read_u16(chunk + 10);
            fmt.sample_rate = read_u32(chunk + 12);
            fmt.bits_per_sample = read_u16(chunk + 22);
            if (fmt.format == kFormatExtensible) {
                if (size < 40) throw AudioError("malformed WAVE_FORMAT_EXTENSIBLE header");
                // First two bytes of the SubFormat GUID carry the actual format tag.
                fmt.format = read_u16(chunk + 8 + 24);
            }
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = chunk + 8;
            // Streaming writers sometimes leave the size as 0 or 0xFFFFFFFF.
            data_size = (size == 0 || size > available) ? available : size;
            break;
        }
        pos = body + size + (size & 1U);
    }

    if (!have_fmt) throw AudioError("missing fmt chunk");
    if (data == nullptr) throw AudioError("missing data chunk");

    const bool pcm16 = fmt.format == kFormatPcm && fmt.bits_per_sample == 16;
    const bool f32 = fmt.format == kFormatFloat && fmt.bits_per_sample == 32;
    if (!pcm16 && !f32) {
        throw AudioError("unsupported WAV encoding (format tag " + std::to_string(fmt.format) + ", " +
                         std::to_string(fmt.bits_per_sample) + " bits); expected 16-bit PCM or 32-bit float");
    }

    AudioBuffer audio;
    audio.sample_rate_hz = static_cast<int>(fmt.sample_rate);
    audio.channel_count = fmt.channels;
    if (audio.channel_count != 1 || audio.sample_rate_hz != kSampleRateHz) audio.validate();

    const std::size_t n = data_size / (fmt.bits_per_sample / 8);
    audio.samples.resize(n);
    if (pcm16) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto v = static_cast<std::int16_t>(read_u16(data + 2 * i));
            audio.samples[i] = static_cast<float>(v) / 32768.0f;
        }
    } else {
        std::memcpy(audio.samples.data(), data, n * sizeof(float));
        for (float& s : audio.samples) {
            if (!std::isfinite(s)) throw AudioError("WAV contains non-finite float samples");
            s = std::clamp(s, -1.0f, 1.0f);
        }
    }
    return audio;
}

AudioBuffer load_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AudioError("cannot open audio file: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse_wav(bytes);
    } catch (const AudioError& e) {
        throw AudioError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_wav(const AudioBuffer& audio, WavEncoding encoding, int channel_count,
                                     int sample_rate_hz) {
    const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
    const std::uint16_t block_align = static_cast<std::uint16_t>(channel_count * bits / 8);
    const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * (bits / 8));

    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);
    put_tag(out, "RIFF");
    put_u32(out, 36 + data_bytes);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put_u32(out, 16);
    put_u16(out, encoding == WavEncoding::Pcm16 ? kFormatPcm : kFormatFloat);
    put_u16(out, static_cast<std::uint16_t>(channel_count));
    put_u32(out, static_cast<std::uint32_t>(sample_rate_hz));
    put_u32(out, static_cast<std::uint32_t>(sample_rate_hz) * block_align);
    put_u16(out, block_align);
    put_u16(out, bits);
    put_tag(out, "data");
    put_u32(out, data_bytes);
    for (float s : audio.samples) {
        if (encoding == WavEncoding::Pcm16) {
            const float clamped = std::clamp(s, -1.0f, 1.0f);
            const auto v = static_cast<std::int16_t>(std::lrint(std::min(clamped * 32768.0f, 32767.0f)));
            put_u16(out, static_cast<std::uint16_t>(v));
        } else {
            put_u32(out, std::bit_cast<std::uint32_t>(s));
        }
    }
    return out;
}

void save_wav(const std::filesystem::path& path, const AudioBuffer& audio, WavEncoding encoding) {
    const auto bytes = encode_wav(audio, encoding, audio.channel_count, audio.sample_rate_hz);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw AudioError("cannot write audio file: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw AudioError("short write: " + path.string());
}

AudioBuffer read_raw_f32(std::istream& in) {
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % sizeof(float) != 0) throw AudioError("raw f32 stream length is not a multiple of 4 bytes");
    AudioBuffer audio;
    audio.samples.resize(bytes.size() / sizeof(float));
    std::memcpy(audio.samples.data(), bytes.data(), bytes.size());
    audio.validate();
    return audio;
}

} // namespace sat
