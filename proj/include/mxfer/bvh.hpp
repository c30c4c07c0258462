#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mxfer/error.hpp"
#include "mxfer/rotation.hpp"

namespace mxfer {

enum class Channel { Xposition, Yposition, Zposition, Xrotation, Yrotation, Zrotation };

constexpr std::string_view channel_name(Channel c) {
  switch (c) {
    case Channel::Xposition: return "Xposition";
    case Channel::Yposition: return "Yposition";
    case Channel::Zposition: return "Zposition";
    case Channel::Xrotation: return "Xrotation";
    case Channel::Yrotation: return "Yrotation";
    case Channel::Zrotation: return "Zrotation";
  }
  return "";
}

inline std::optional<Channel> parse_channel(std::string_view s) {
  for (Channel c : {Channel::Xposition, Channel::Yposition, Channel::Zposition, Channel::Xrotation,
                    Channel::Yrotation, Channel::Zrotation}) {
    if (channel_name(c) == s) return c;
  }
  return std::nullopt;
}

constexpr bool is_rotation_channel(Channel c) { return c >= Channel::Xrotation; }
constexpr int channel_axis(Channel c) { return static_cast<int>(c) % 3; }

struct RawJoint {
  std::string name;
  std::optional<std::size_t> parent;
  Vec3 offset = Vec3::Zero();
  std::vector<Channel> channels;
  bool is_end_site = false;

  bool operator==(const RawJoint&) const = default;
};

struct RawMotion {
  std::size_t frame_count = 0;
  double frame_time = 0.0;
  // frame_count x total channel count; degrees for rotations.
  Matrix values;
};

struct BvhFile {
  std::vector<RawJoint> joints;
  RawMotion motion;
};

inline std::size_t total_channels(const std::vector<RawJoint>& joints) {
  std::size_t n = 0;
  for (const auto& j : joints) n += j.channels.size();
  return n;
}

namespace detail {

class BvhLexer {
 public:
  explicit BvhLexer(std::string_view text) : text_(text) {}

  struct Token {
    std::string_view text;
    std::size_t line = 0;
    std::size_t column = 0;
  };

  // Returns the next whitespace-delimited token, or an empty token at EOF.
  Token next() {
    skip_space();
    Token t{{}, line_, col_};
    const std::size_t begin = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) advance();
    t.text = text_.substr(begin, pos_ - begin);
    return t;
  }

  // Remainder of the current line, trimmed; consumes the newline.
  std::string_view rest_of_line() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) advance();
    const std::size_t begin = pos_;
    while (pos_ < text_.size() && text_[pos_] != '\n') advance();
    std::string_view s = text_.substr(begin, pos_ - begin);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    if (pos_ < text_.size()) advance();
    return s;
  }

  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }

  std::size_t line() const { return line_; }
  std::size_t column() const { return col_; }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) advance();
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

[[noreturn]] inline void syntax_error(const BvhLexer::Token& t, const std::string& what) {
  throw Error(ErrorCode::SyntaxError, "line " + std::to_string(t.line) + ", column " +
                                          std::to_string(t.column) + ": " + what + " (got '" +
                                          std::string(t.text) + "')");
}

inline double to_double(const BvhLexer::Token& t) {
  double v = 0.0;
  const char* b = t.text.data();
  const char* e = b + t.text.size();
  if (!t.text.empty() && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) syntax_error(t, "expected a number");
  return v;
}

inline void expect(BvhLexer& lex, std::string_view word) {
  auto t = lex.next();
  if (t.text != word) syntax_error(t, "expected '" + std::string(word) + "'");
}

inline void parse_joint_body(BvhLexer& lex, std::vector<RawJoint>& joints, std::size_t self) {
  expect(lex, "{");
  expect(lex, "OFFSET");
  for (int a = 0; a < 3; ++a) joints[self].offset[a] = to_double(lex.next());

  if (!joints[self].is_end_site) {
    auto t = lex.next();
    if (t.text != "CHANNELS") syntax_error(t, "expected 'CHANNELS'");
    auto count_tok = lex.next();
    const double count = to_double(count_tok);
    if (count < 0 || count > 6 || count != static_cast<int>(count)) syntax_error(count_tok, "bad channel count");
    for (int c = 0; c < static_cast<int>(count); ++c) {
      auto ct = lex.next();
      auto ch = parse_channel(ct.text);
      if (!ch) syntax_error(ct, "unknown channel name");
      if (std::find(joints[self].channels.begin(), joints[self].channels.end(), *ch) !=
          joints[self].channels.end()) {
        syntax_error(ct, "duplicate channel");
      }
      joints[self].channels.push_back(*ch);
    }
  }

  for (;;) {
    auto t = lex.next();
    if (t.text == "}") return;
    if (joints[self].is_end_site) syntax_error(t, "expected '}' closing End Site");
    if (t.text == "JOINT") {
      RawJoint child;
      auto name = lex.rest_of_line();
      if (name.empty()) syntax_error(t, "JOINT without a name");
      child.name = std::string(name);
      child.parent = self;
      joints.push_back(std::move(child));
      parse_joint_body(lex, joints, joints.size() - 1);
    } else if (t.text == "End") {
      expect(lex, "Site");
      RawJoint site;
      site.name = "End Site";
      site.parent = self;
      site.is_end_site = true;
      joints.push_back(std::move(site));
      parse_joint_body(lex, joints, joints.size() - 1);
    } else {
      syntax_error(t, "expected JOINT, End Site or '}'");
    }
  }
}

inline std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

inline void write_joint(std::ostringstream& os, const std::vector<RawJoint>& joints,
                        const std::vector<std::vector<std::size_t>>& children, std::size_t idx, int depth) {
  const std::string indent(static_cast<std::size_t>(depth), '\t');
  const RawJoint& j = joints[idx];
  if (j.is_end_site) {
    os << indent << "End Site\n";
  } else {
    os << indent << (j.parent ? "JOINT " : "ROOT ") << j.name << "\n";
  }
  os << indent << "{\n";
  os << indent << "\tOFFSET " << format_fixed(j.offset.x()) << " " << format_fixed(j.offset.y()) << " "
     << format_fixed(j.offset.z()) << "\n";
  if (!j.is_end_site) {
    os << indent << "\tCHANNELS " << j.channels.size();
    for (Channel c : j.channels) os << " " << channel_name(c);
    os << "\n";
  }
  for (std::size_t c : children[idx]) write_joint(os, joints, children, c, depth + 1);
  os << indent << "}\n";
}

}  // namespace detail

// Joints come back in depth-first document order, end sites included.
inline BvhFile parse_bvh(std::string_view text) {
  detail::BvhLexer lex(text);
  BvhFile out;

  detail::expect(lex, "HIERARCHY");
  auto root_tok = lex.next();
  if (root_tok.text != "ROOT") detail::syntax_error(root_tok, "expected 'ROOT'");
  RawJoint root;
  auto root_name = lex.rest_of_line();
  if (root_name.empty()) detail::syntax_error(root_tok, "ROOT without a name");
  root.name = std::string(root_name);
  out.joints.push_back(std::move(root));
  detail::parse_joint_body(lex, out.joints, 0);

  auto motion_tok = lex.next();
  if (motion_tok.text == "ROOT") detail::syntax_error(motion_tok, "multiple roots are not supported");
  if (motion_tok.text != "MOTION") detail::syntax_error(motion_tok, "expected 'MOTION'");

  detail::expect(lex, "Frames:");
  auto frames_tok = lex.next();
  const double frames = detail::to_double(frames_tok);
  if (frames < 0 || frames != static_cast<double>(static_cast<long long>(frames))) {
    detail::syntax_error(frames_tok, "frame count must be a non-negative integer");
  }
  if (frames == 0) throw Error(ErrorCode::EmptyMotion, "MOTION section declares 0 frames");
  detail::expect(lex, "Frame");
  detail::expect(lex, "Time:");
  auto ft_tok = lex.next();
  const double frame_time = detail::to_double(ft_tok);
  if (!(frame_time > 0.0)) detail::syntax_error(ft_tok, "frame time must be positive");
  lex.rest_of_line();

  const auto width = total_channels(out.joints);
  out.motion.frame_count = static_cast<std::size_t>(frames);
  out.motion.frame_time = frame_time;
  out.motion.values.resize(static_cast<Eigen::Index>(out.motion.frame_count), static_cast<Eigen::Index>(width));

  std::size_t row = 0;
  while (row < out.motion.frame_count) {
    if (lex.at_end()) {
      throw Error(ErrorCode::SyntaxError, "line " + std::to_string(lex.line()) + ": expected " +
                                              std::to_string(out.motion.frame_count) + " frames, found " +
                                              std::to_string(row));
    }
    const std::size_t line_no = lex.line();
    std::string_view line = lex.rest_of_line();
    if (line.empty()) continue;
    detail::BvhLexer row_lex(line);
    std::size_t col = 0;
    while (!row_lex.at_end()) {
      auto tok = row_lex.next();
      tok.line = line_no;
      if (col >= width) {
        throw Error(ErrorCode::ChannelMismatch, "line " + std::to_string(line_no) + ": row has more than " +
                                                    std::to_string(width) + " values");
      }
      out.motion.values(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = detail::to_double(tok);
      ++col;
    }
    if (col != width) {
      throw Error(ErrorCode::ChannelMismatch, "line " + std::to_string(line_no) + ": row has " +
                                                  std::to_string(col) + " values, hierarchy declares " +
                                                  std::to_string(width));
    }
    ++row;
  }
  if (!lex.at_end()) {
    auto t = lex.next();
    detail::syntax_error(t, "trailing data after the declared frames");
  }
  return out;
}

inline std::string write_bvh(const std::vector<RawJoint>& joints, const RawMotion& motion) {
  require(!joints.empty() && !joints[0].parent, ErrorCode::ShapeMismatch, "first joint must be the root");
  require(motion.frame_time > 0.0, ErrorCode::ShapeMismatch, "frame time must be positive");
  require(static_cast<std::size_t>(motion.values.cols()) == total_channels(joints) &&
              static_cast<std::size_t>(motion.values.rows()) == motion.frame_count,
          ErrorCode::ChannelMismatch, "motion matrix does not match the hierarchy");

  std::vector<std::vector<std::size_t>> children(joints.size());
  for (std::size_t i = 1; i < joints.size(); ++i) {
    require(joints[i].parent.has_value() && *joints[i].parent < i, ErrorCode::ShapeMismatch,
            "joints must be in depth-first order with a single root");
    children[*joints[i].parent].push_back(i);
  }

  std::ostringstream os;
  os << "HIERARCHY\n";
  detail::write_joint(os, joints, children, 0, 0);
  os << "MOTION\n";
  os << "Frames: " << motion.frame_count << "\n";
  os << "Frame Time: " << detail::format_fixed(motion.frame_time) << "\n";
  for (Eigen::Index r = 0; r < motion.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < motion.values.cols(); ++c) {
      if (c) os << ' ';
      os << detail::format_fixed(motion.values(r, c));
    }
    os << "\n";
  }
  return os.str();
}

inline std::string write_bvh(const BvhFile& file) { return write_bvh(file.joints, file.motion); }

inline BvhFile load_bvh(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::SyntaxError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_bvh(ss.str());
}

inline void save_bvh(const std::string& path, const BvhFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::SyntaxError, "cannot write '" + path + "'");
  out << write_bvh(file);
}

}  // namespace mxfer
