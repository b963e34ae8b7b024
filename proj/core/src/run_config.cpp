/* Copyright 2026 The segbert Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "segbert/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>
#include <vector>

#include "segbert/binary_io.hpp"
#include "segbert/error.hpp"

namespace segbert {

namespace {

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

std::string to_text(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(std::string_view s) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    fail(Errc::config, "bad number '" + std::string(s) + "'");
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  fail(Errc::config, "bad boolean '" + std::string(s) + "' (expected true or false)");
}

template <typename T, typename Ref>
Field field(const char* section, const char* key, Ref ref) {
  Field f{section, key, {}, {}};
  f.get = [ref](const RunConfig& c) -> std::string {
    const T& v = ref(const_cast<RunConfig&>(c));
    if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
    else if constexpr (std::is_same_v<T, double>) return to_text(v);
    else return std::to_string(v);
  };
  f.set = [ref](RunConfig& c, std::string_view s) {
    if constexpr (std::is_same_v<T, bool>) ref(c) = parse_bool(s);
    else ref(c) = parse_number<T>(s);
  };
  return f;
}

Field mode_field() {
  Field f{"toy", "mode", {}, {}};
  f.get = [](const RunConfig& c) { return std::string(toy::prosody_mode_name(c.toy.mode)); };
  f.set = [](RunConfig& c, std::string_view s) { c.toy.mode = toy::parse_prosody_mode(s); };
  return f;
}

#define SB_FIELD(T, section, key, expr) \
  field<T>(section, key, [](RunConfig& c) -> T& { return c.expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using u64 = std::uint64_t;
    using sz = std::size_t;
    std::vector<Field> f = {
        SB_FIELD(u64, "run", "seed", seed),
        SB_FIELD(sz, "run", "bert_steps", bert_steps),
        SB_FIELD(sz, "run", "tts_steps", tts_steps),

        SB_FIELD(sz, "features", "mel_bins", mel.bins),
        SB_FIELD(double, "features", "shift_ms", mel.shift_ms),
        SB_FIELD(double, "features", "window_ms", mel.window_ms),
        SB_FIELD(double, "features", "fmin", mel.fmin),
        SB_FIELD(double, "features", "fmax", mel.fmax),
        SB_FIELD(double, "features", "floor", mel.floor),

        SB_FIELD(sz, "toy", "utterances", toy.utterance_count),
        SB_FIELD(sz, "toy", "vocab_size", toy.vocab_size),
        SB_FIELD(sz, "toy", "syllables", toy.syllables),
        SB_FIELD(sz, "toy", "phones_per_syllable", toy.phones_per_syllable),
        SB_FIELD(sz, "toy", "min_syllable_frames", toy.min_syllable_frames),
        SB_FIELD(sz, "toy", "max_syllable_frames", toy.max_syllable_frames),
        mode_field(),
        SB_FIELD(double, "toy", "contour_scale", toy.contour_scale),
        SB_FIELD(double, "toy", "noise", toy.noise),
        SB_FIELD(u64, "toy", "seed", toy.seed),

        SB_FIELD(sz, "bert", "d_model", bert.d_model),
        SB_FIELD(sz, "bert", "heads", bert.heads),
        SB_FIELD(sz, "bert", "text_layers", bert.text_layers),
        SB_FIELD(sz, "bert", "speech_layers", bert.speech_layers),
        SB_FIELD(sz, "bert", "decoder_layers", bert.decoder_layers),
        SB_FIELD(sz, "bert", "d_ff", bert.d_ff),
        SB_FIELD(sz, "bert", "vocab_size", bert.vocab_size),
        SB_FIELD(sz, "bert", "max_frames", bert.max_frames),
        SB_FIELD(double, "bert", "mask_rate", bert.mask_rate),
        SB_FIELD(bool, "bert", "exact_count_masking", bert.exact_count_masking),
        SB_FIELD(bool, "bert", "masked_only_loss", bert.masked_only_loss),
        SB_FIELD(double, "bert", "dropout", bert.dropout),
        SB_FIELD(double, "bert", "learning_rate", bert.learning_rate),

        SB_FIELD(sz, "tts", "d_model", tts.d_model),
        SB_FIELD(sz, "tts", "heads", tts.heads),
        SB_FIELD(sz, "tts", "encoder_layers", tts.encoder_layers),
        SB_FIELD(sz, "tts", "decoder_layers", tts.decoder_layers),
        SB_FIELD(sz, "tts", "d_ff", tts.d_ff),
        SB_FIELD(sz, "tts", "vocab_size", tts.vocab_size),
        SB_FIELD(sz, "tts", "speaker_count", tts.speaker_count),
        SB_FIELD(sz, "tts", "speaker_dim", tts.speaker_dim),
        SB_FIELD(sz, "tts", "prenet_dim", tts.prenet_dim),
        SB_FIELD(sz, "tts", "segment_frames", tts.segment_frames),
        SB_FIELD(sz, "tts", "dynamic_projection_dim", tts.dynamic_projection_dim),
        SB_FIELD(bool, "tts", "dynamic_embedding", tts.dynamic_embedding),
        SB_FIELD(sz, "tts", "postnet_layers", tts.postnet_layers),
        SB_FIELD(sz, "tts", "postnet_channels", tts.postnet_channels),
        SB_FIELD(sz, "tts", "postnet_kernel", tts.postnet_kernel),
        SB_FIELD(double, "tts", "stop_threshold", tts.stop_threshold),
        SB_FIELD(sz, "tts", "max_decode_frames", tts.max_decode_frames),
        SB_FIELD(double, "tts", "dropout", tts.dropout),
        SB_FIELD(double, "tts", "prenet_dropout", tts.prenet_dropout),
        SB_FIELD(double, "tts", "learning_rate", tts.learning_rate),

        SB_FIELD(bool, "eval", "per_utterance", eval_per_utterance),
    };
    return f;
  }();
  return table;
}

#undef SB_FIELD

// Values that several modules must agree on are stored once and copied out.
void sync_shared(RunConfig& c) {
  c.toy.mel_bins = c.bert.mel_bins = c.tts.mel_bins = c.mel.bins;
  c.tts.embedding_dim = c.bert.embedding_dim();
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::validate() const {
  RunConfig c = *this;
  require(c.mel.bins >= 1, Errc::config, "features.mel_bins must be >= 1");
  require(c.mel.shift_ms > 0.0 && c.mel.window_ms >= c.mel.shift_ms, Errc::config,
          "features: need 0 < shift_ms <= window_ms");
  require(c.mel.fmin >= 0.0 && c.mel.fmax > c.mel.fmin, Errc::config,
          "features: need 0 <= fmin < fmax");
  require(c.mel.floor > 0.0, Errc::config, "features.floor must be positive");
  require(toy.mel_bins == mel.bins && bert.mel_bins == mel.bins && tts.mel_bins == mel.bins,
          Errc::config, "mel bin counts disagree between sections");
  require(tts.embedding_dim == bert.embedding_dim(), Errc::config,
          "tts.embedding_dim must equal the speech BERT width");
  if (c.bert.vocab_size == 0) c.bert.vocab_size = 1;
  if (c.tts.vocab_size == 0) c.tts.vocab_size = 1;
  if (c.tts.speaker_count == 0) c.tts.speaker_count = 1;
  if (c.tts.max_decode_frames == 0) c.tts.max_decode_frames = 1;
  c.toy.validate();
  c.bert.validate();
  c.tts.validate();
}

RunConfig desk_profile() {
  RunConfig c;
  c.profile = "desk";
  c.mel.bins = 8;
  c.bert.vocab_size = 0;
  c.tts.vocab_size = 0;
  c.tts.speaker_count = 0;
  c.tts.max_decode_frames = 0;
  sync_shared(c);
  return c;
}

RunConfig full_profile() {
  RunConfig c = desk_profile();
  c.profile = "full";
  c.mel.bins = 80;
  c.bert.d_model = c.tts.d_model = 256;
  c.bert.heads = c.tts.heads = 4;
  c.bert.text_layers = c.bert.speech_layers = c.bert.decoder_layers = 3;
  c.tts.encoder_layers = c.tts.decoder_layers = 3;
  c.bert.d_ff = c.tts.d_ff = 1024;
  c.tts.prenet_dim = 256;
  c.tts.speaker_dim = 64;
  c.tts.postnet_layers = 5;
  c.tts.postnet_channels = 256;
  c.tts.segment_frames = 20;
  c.tts.dynamic_projection_dim = 80;
  c.bert.dropout = c.tts.dropout = 0.1;
  c.toy.mel_bins = 80;
  sync_shared(c);
  return c;
}

RunConfig profile_by_name(std::string_view name) {
  if (name == "desk") return desk_profile();
  if (name == "full") return full_profile();
  fail(Errc::config, "unknown profile '" + std::string(name) + "' (expected desk or full)");
}

RunConfig parse_run_config(std::string_view text) {
  struct Entry {
    std::size_t line;
    std::string section, key, value;
  };
  std::vector<Entry> entries;
  std::string section;
  std::string profile = "desk";
  std::istringstream in{std::string(text)};
  std::string raw;
  for (std::size_t line_no = 1; std::getline(in, raw); ++line_no) {
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') fail(Errc::config, where + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      static const char* known[] = {"run", "features", "toy", "bert", "tts", "eval"};
      if (std::find(std::begin(known), std::end(known), section) == std::end(known))
        fail(Errc::config, where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(Errc::config, where + "expected key = value");
    if (section.empty()) fail(Errc::config, where + "key outside any section");
    Entry e{line_no, section, std::string(trim(line.substr(0, eq))),
            std::string(trim(line.substr(eq + 1)))};
    if (e.section == "run" && e.key == "profile") {
      profile = e.value;
      continue;
    }
    entries.push_back(std::move(e));
  }

  RunConfig cfg = profile_by_name(profile);
  for (const auto& e : entries) {
    const std::string where = "config line " + std::to_string(e.line) + ": ";
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) {
      return e.section == f.section && e.key == f.key;
    });
    if (it == table.end()) fail(Errc::config, where + "unknown key " + e.section + "." + e.key);
    try {
      it->set(cfg, e.value);
    } catch (const Error& err) {
      fail(Errc::config, where + e.section + "." + e.key + ": " + err.what());
    }
  }
  sync_shared(cfg);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(io::read_text(path));
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::string out = "[run]\nprofile = " + cfg.profile + "\n";
  std::string section = "run";
  for (const auto& f : fields()) {
    if (section != f.section) {
      section = f.section;
      out += "\n[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_run_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace segbert
