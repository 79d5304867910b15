#include "gfcnn/arch.hpp"

#include <cctype>

#include "gfcnn/common.hpp"

namespace gfcnn {

std::string LayerSpec::token() const {
  switch (kind) {
    case Kind::Conv:
      return cat("C(", a, ")");
    case Kind::Pool:
      // P(n,m): n = time-axis (cols) factor, m = variable-axis (rows) factor
      return a == b ? cat("P(", a, ")") : cat("P(", b, ",", a, ")");
    case Kind::GlobalFeature:
      return cat("G(", a, ")");
    case Kind::FullyConnected:
      return cat("F(", a, ")", dropout ? "*" : "");
  }
  return {};
}

std::string ArchSpec::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) s += "-";
    s += layers[i].token();
  }
  return s;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void token_fail(std::size_t pos, const std::string& token,
                             const std::string& why) {
  fail(cat("architecture string: token ", pos, " '", token, "': ", why));
}

// Parses "X(n)", "X(n,m)", optionally followed by '*'.
struct RawToken {
  char kind;
  std::size_t a = 0, b = 0;
  bool has_b = false;
  bool star = false;
};

RawToken lex_token(const std::string& tok, std::size_t pos) {
  RawToken out{};
  std::size_t i = 0;
  if (i >= tok.size() || !std::isalpha(static_cast<unsigned char>(tok[i])))
    token_fail(pos, tok, "expected a layer letter");
  out.kind = tok[i++];
  if (i >= tok.size() || tok[i] != '(')
    token_fail(pos, tok, "expected '(' after the layer letter");
  ++i;
  auto read_uint = [&](std::size_t& value) {
    if (i >= tok.size() || !std::isdigit(static_cast<unsigned char>(tok[i])))
      token_fail(pos, tok, "expected an integer argument");
    value = 0;
    while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i])))
      value = value * 10 + static_cast<std::size_t>(tok[i++] - '0');
  };
  read_uint(out.a);
  if (i < tok.size() && tok[i] == ',') {
    ++i;
    read_uint(out.b);
    out.has_b = true;
  }
  if (i >= tok.size() || tok[i] != ')')
    token_fail(pos, tok, "expected ')'");
  ++i;
  if (i < tok.size() && tok[i] == '*') {
    out.star = true;
    ++i;
  }
  if (i != tok.size()) token_fail(pos, tok, "trailing characters");
  return out;
}

}  // namespace

ArchSpec parse_arch(const std::string& text) {
  ArchSpec spec;
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (c == '-') {
      tokens.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  tokens.push_back(cur);

  bool seen_g = false, seen_f = false;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::size_t pos = t + 1;
    const std::string tok = trim(tokens[t]);
    if (tok.empty()) token_fail(pos, tokens[t], "empty token");
    RawToken raw = lex_token(tok, pos);
    LayerSpec layer{};
    switch (raw.kind) {
      case 'C':
        if (raw.has_b) token_fail(pos, tok, "C takes one argument");
        if (raw.a < 1) token_fail(pos, tok, "kernel count must be >= 1");
        layer = {LayerSpec::Kind::Conv, raw.a, 0, false};
        break;
      case 'P':
        if (raw.a < 1 || (raw.has_b && raw.b < 1))
          token_fail(pos, tok, "pool factors must be >= 1");
        // P(n,m): n applies to the time axis (cols), m to the variable axis
        layer = {LayerSpec::Kind::Pool, raw.has_b ? raw.b : raw.a, raw.a, false};
        break;
      case 'G':
        if (raw.has_b) token_fail(pos, tok, "G takes one argument");
        if (raw.a < 1) token_fail(pos, tok, "global-feature dim must be >= 1");
        if (seen_g) token_fail(pos, tok, "more than one G layer");
        if (seen_f) token_fail(pos, tok, "G must precede the first F layer");
        seen_g = true;
        layer = {LayerSpec::Kind::GlobalFeature, raw.a, 0, false};
        break;
      case 'F':
        if (raw.has_b) token_fail(pos, tok, "F takes one argument");
        if (raw.a < 1) token_fail(pos, tok, "neuron count must be >= 1");
        seen_f = true;
        layer = {LayerSpec::Kind::FullyConnected, raw.a, 0, raw.star};
        break;
      default:
        token_fail(pos, tok, cat("unknown layer type '", raw.kind, "'"));
    }
    if (raw.star && raw.kind != 'F')
      token_fail(pos, tok, "dropout marker '*' only applies to F layers");
    spec.layers.push_back(layer);
  }
  if (!seen_f)
    fail(cat("architecture string '", text, "': at least one F layer is required"));
  return spec;
}

ShapeTrace trace_shapes(const ArchSpec& spec) {
  if (spec.input_rows < 1 || spec.input_cols < 1)
    fail("trace: input extents must be >= 1");
  if (spec.n_classes < 1) fail("trace: class count must be >= 1");

  ShapeTrace tr;
  std::size_t ch = 1, h = spec.input_rows, w = spec.input_cols;
  bool flat = false, after_g = false;
  tr.entries.push_back({"input", {ch, h, w}});

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string name = cat("layer ", i + 1, " (", l.token(), ")");
    switch (l.kind) {
      case LayerSpec::Kind::Conv:
        if (flat || after_g)
          fail(cat(name, ": convolution after the fully-connected stage"));
        if (h < 3 || w < 3)
          fail(cat(name, ": spatial extents ", h, "x", w,
                   " too small for a 3x3 kernel"));
        h -= 2;
        w -= 2;
        ch = l.a;
        tr.entries.push_back({l.token(), {ch, h, w}});
        break;
      case LayerSpec::Kind::Pool:
        if (flat || after_g)
          fail(cat(name, ": pooling after the fully-connected stage"));
        if (l.a > h || l.b > w)
          fail(cat(name, ": pool window ", l.a, "x", l.b,
                   " larger than input ", h, "x", w));
        h /= l.a;
        w /= l.b;
        tr.entries.push_back({l.token(), {ch, h, w}});
        break;
      case LayerSpec::Kind::GlobalFeature:
        after_g = true;
        tr.mlp_dim = l.a;
        tr.entries.push_back({l.token(), {l.a}});
        break;
      case LayerSpec::Kind::FullyConnected:
        if (!flat) {
          tr.flat_cnn = ch * h * w;
          tr.first_fc_in = tr.flat_cnn + tr.mlp_dim;
          tr.entries.push_back({"flatten", {tr.first_fc_in}});
          flat = true;
        }
        tr.entries.push_back({l.token(), {l.a}});
        break;
    }
  }
  tr.entries.push_back({cat("F(", spec.n_classes, ") head"), {spec.n_classes}});
  return tr;
}

ParamCount count_params(const ArchSpec& spec) {
  ShapeTrace tr = trace_shapes(spec);  // validates the spec
  ParamCount pc;
  std::size_t ch = 1;
  std::size_t width = tr.first_fc_in;
  for (const LayerSpec& l : spec.layers) {
    switch (l.kind) {
      case LayerSpec::Kind::Conv:
        pc.conv += l.a * (ch * 9 + 1);
        ch = l.a;
        break;
      case LayerSpec::Kind::Pool:
        break;
      case LayerSpec::Kind::GlobalFeature:
        pc.mlp += l.a * (spec.input_rows * spec.input_cols + 1);
        break;
      case LayerSpec::Kind::FullyConnected:
        pc.fc += l.a * (width + 1);
        width = l.a;
        break;
    }
  }
  pc.fc += spec.n_classes * (width + 1);  // implicit classification head
  pc.total = pc.conv + pc.mlp + pc.fc;
  return pc;
}

}  // namespace gfcnn
