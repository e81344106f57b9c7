#include "fusionkit/container.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "fusionkit/error.hpp"
#include "parse_util.hpp"

namespace fusionkit {

namespace {

constexpr std::string_view kMagic = "FUSIONKIT-CONTAINER";

class LineReader {
 public:
  LineReader(std::string_view text, std::string_view source) : text_(text), source_(source) {}

  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    const std::size_t end = text_.find('\n', pos_);
    const std::size_t stop = end == std::string_view::npos ? text_.size() : end;
    line = text_.substr(pos_, stop - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = stop + 1;
    ++line_no_;
    return true;
  }

  std::string_view require() {
    std::string_view line;
    if (!next(line)) fail("unexpected end of container");
    return line;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(std::string(source_), line_no_, what); }

 private:
  std::string_view text_;
  std::string_view source_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

std::size_t parse_size(std::string_view s, LineReader& reader) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) reader.fail(fmt::format("bad count '{}'", s));
  return v;
}

Container parse_block(std::string_view kind, LineReader& reader) {
  Container c{std::string(kind)};
  std::vector<std::string_view> fields;
  while (true) {
    const std::string_view line = reader.require();
    if (line == "end") return c;
    if (line.starts_with("begin ")) {
      c.add_child(parse_block(line.substr(6), reader));
    } else if (line.starts_with("meta ")) {
      const std::string_view rest = line.substr(5);
      const std::size_t sp = rest.find(' ');
      if (sp == std::string_view::npos) reader.fail("meta line without value");
      c.set(std::string(rest.substr(0, sp)), std::string(rest.substr(sp + 1)));
    } else if (line.starts_with("tensor ")) {
      detail::split_fields(line.substr(7), fields);
      if (fields.size() != 3) reader.fail("tensor header must be: tensor <name> <rows> <cols>");
      const std::string name(fields[0]);
      const std::size_t rows = parse_size(fields[1], reader);
      const std::size_t cols = parse_size(fields[2], reader);
      Matrix m(rows, cols);
      for (std::size_t r = 0; r < rows; ++r) {
        detail::split_fields(reader.require(), fields);
        if (fields.size() != cols) {
          reader.fail(fmt::format("tensor {} row {}: expected {} values, found {}", name, r, cols, fields.size()));
        }
        for (std::size_t k = 0; k < cols; ++k) {
          if (!detail::parse_double(fields[k], m(r, k))) reader.fail(fmt::format("bad value '{}'", fields[k]));
        }
      }
      c.add_tensor(name, std::move(m));
    } else {
      reader.fail(fmt::format("unrecognized line '{}'", line));
    }
  }
}

}  // namespace

std::string format_double(double v) { return fmt::format("{}", v); }

void Container::set(std::string key, std::string value) {
  for (auto& [k, v] : meta_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  meta_.emplace_back(std::move(key), std::move(value));
}

void Container::set(std::string key, double value) { set(std::move(key), format_double(value)); }
void Container::set(std::string key, std::size_t value) { set(std::move(key), std::to_string(value)); }

void Container::add_tensor(std::string name, Matrix m) { tensors_.emplace_back(std::move(name), std::move(m)); }
void Container::add_child(Container child) { children_.push_back(std::move(child)); }

bool Container::has(std::string_view key) const {
  for (const auto& [k, v] : meta_)
    if (k == key) return true;
  return false;
}

const std::string& Container::get(std::string_view key) const {
  for (const auto& [k, v] : meta_)
    if (k == key) return v;
  throw Error(fmt::format("container '{}' has no key '{}'", kind_, key));
}

double Container::get_double(std::string_view key) const {
  double v = 0.0;
  if (!detail::parse_double(get(key), v)) throw Error(fmt::format("container key '{}' is not a number", key));
  return v;
}

std::size_t Container::get_size(std::string_view key) const {
  const std::string& s = get(key);
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(fmt::format("container key '{}' is not a count", key));
  }
  return v;
}

const Matrix& Container::tensor(std::string_view name) const {
  for (const auto& [n, m] : tensors_)
    if (n == name) return m;
  throw Error(fmt::format("container '{}' has no tensor '{}'", kind_, name));
}

const Container& Container::child(std::string_view kind) const {
  for (const auto& c : children_)
    if (c.kind() == kind) return c;
  throw Error(fmt::format("container '{}' has no nested '{}'", kind_, kind));
}

void Container::expect_kind(std::string_view expected) const {
  if (kind_ != expected) throw Error(fmt::format("expected a '{}' container, found '{}'", expected, kind_));
}

void Container::write(std::string& out) const {
  fmt::format_to(std::back_inserter(out), "begin {}\n", kind_);
  for (const auto& [k, v] : meta_) fmt::format_to(std::back_inserter(out), "meta {} {}\n", k, v);
  for (const auto& [name, m] : tensors_) {
    fmt::format_to(std::back_inserter(out), "tensor {} {} {}\n", name, m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const auto row = m.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out += ' ';
        fmt::format_to(std::back_inserter(out), "{}", row[c]);
      }
      out += '\n';
    }
  }
  for (const auto& child : children_) child.write(out);
  out += "end\n";
}

std::string Container::serialize() const {
  std::string out = fmt::format("{} {}\n", kMagic, kVersion);
  write(out);
  return out;
}

Container Container::parse(std::string_view text, std::string_view source) {
  LineReader reader(text, source);
  const std::string_view header = reader.require();
  if (header != fmt::format("{} {}", kMagic, kVersion)) {
    reader.fail(fmt::format("not a version-{} container (header '{}')", kVersion, header));
  }
  const std::string_view begin = reader.require();
  if (!begin.starts_with("begin ")) reader.fail("expected 'begin <kind>'");
  return parse_block(begin.substr(6), reader);
}

void Container::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << serialize();
}

Container Container::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

}  // namespace fusionkit
