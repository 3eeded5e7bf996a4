/* Copyright 2026 The minimpi Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cctype>
#include <charconv>
#include <string>
#include <variant>
#include <vector>

#include "minimpi/datatype.hpp"
#include "minimpi/error.hpp"

namespace minimpi {

namespace {

// Recursive-descent parser for the type-dump expression language:
//   type := NAME | NAME '(' arg (',' arg)* ')'
//   arg  := INT | type | '[' (INT|type) (',' (INT|type))* ']'
class TypeParser {
 public:
  explicit TypeParser(std::string_view text) : text_(text) {}

  Datatype parse() {
    Datatype t = parse_type();
    skip_ws();
    if (pos_ != text_.size()) error("trailing characters");
    return t;
  }

 private:
  using Arg = std::variant<std::int64_t, Datatype, std::vector<std::int64_t>, std::vector<Datatype>>;

  [[noreturn]] void error(const std::string& what) const {
    fail(Errc::kArg, "type expression: " + what + " at offset " + std::to_string(pos_));
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) error(std::string("expected '") + c + "'");
  }

  bool at_int() {
    skip_ws();
    return pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '-');
  }

  std::int64_t parse_int() {
    skip_ws();
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), v);
    if (ec != std::errc()) error("expected integer");
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return v;
  }

  std::string parse_name() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    if (start == pos_) error("expected type name");
    return std::string(text_.substr(start, pos_ - start));
  }

  Arg parse_arg() {
    if (accept('[')) {
      if (at_int()) {
        std::vector<std::int64_t> v;
        do v.push_back(parse_int()); while (accept(','));
        expect(']');
        return v;
      }
      std::vector<Datatype> v;
      if (accept(']')) return v;
      do v.push_back(parse_type()); while (accept(','));
      expect(']');
      return v;
    }
    if (at_int()) return parse_int();
    return parse_type();
  }

  template <class T>
  T take(std::vector<Arg>& args, std::size_t i, const std::string& fn) {
    if (i >= args.size() || !std::holds_alternative<T>(args[i]))
      error("bad argument " + std::to_string(i) + " to " + fn);
    return std::get<T>(args[i]);
  }

  Datatype parse_type() {
    const std::string name = parse_name();
    if (name == "byte" || name == "char") return Datatype::byte();
    if (name == "int32" || name == "int" || name == "float") return Datatype::int32();
    if (name == "int64" || name == "long" || name == "double") return Datatype::int64();
    std::vector<Arg> args;
    expect('(');
    do args.push_back(parse_arg()); while (accept(','));
    expect(')');
    using I = std::int64_t;
    using V = std::vector<std::int64_t>;
    auto arity = [&](std::size_t n) {
      if (args.size() != n) error(name + " takes " + std::to_string(n) + " arguments");
    };
    if (name == "basic") {
      arity(1);
      return Datatype::basic(take<I>(args, 0, name));
    }
    if (name == "contiguous") {
      arity(2);
      return Datatype::contiguous(take<I>(args, 0, name), take<Datatype>(args, 1, name));
    }
    if (name == "vector" || name == "hvector") {
      arity(4);
      auto f = name == "vector" ? &Datatype::vector : &Datatype::hvector;
      return f(take<I>(args, 0, name), take<I>(args, 1, name), take<I>(args, 2, name),
               take<Datatype>(args, 3, name));
    }
    if (name == "indexed_block") {
      arity(3);
      V displs = take<V>(args, 1, name);
      return Datatype::indexed_block(take<I>(args, 0, name), displs, take<Datatype>(args, 2, name));
    }
    if (name == "struct") {
      arity(3);
      V bl = take<V>(args, 0, name);
      V displs = take<V>(args, 1, name);
      auto types = take<std::vector<Datatype>>(args, 2, name);
      return Datatype::create_struct(bl, displs, types);
    }
    if (name == "subarray") {
      arity(5);
      const I ndims = take<I>(args, 0, name);
      V full = take<V>(args, 1, name);
      V sub = take<V>(args, 2, name);
      V off = take<V>(args, 3, name);
      if (static_cast<I>(full.size()) != ndims) error("subarray ndims mismatch");
      return Datatype::subarray(full, sub, off, take<Datatype>(args, 4, name));
    }
    if (name == "resized") {
      arity(3);
      return Datatype::resized(take<I>(args, 0, name), take<I>(args, 1, name),
                               take<Datatype>(args, 2, name));
    }
    error("unknown type constructor '" + name + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Datatype parse_type_expression(std::string_view text) {
  Datatype t = TypeParser(text).parse();
  t.commit();
  return t;
}

}  // namespace minimpi
