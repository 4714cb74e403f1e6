#include "mfg/report.hpp"

#include <cstdio>

namespace mfg {
namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12e", v);
  return buf;
}

std::string escape(const std::string& s) { return Json(s).dump(); }

void write_json(const Json& v, int indent, std::string& out) {
  const std::string pad(2 * indent, ' ');
  const std::string pad1(2 * (indent + 1), ' ');
  switch (v.type()) {
    case Json::value_t::null:
      out += "null";
      break;
    case Json::value_t::boolean:
      out += v.get<bool>() ? "true" : "false";
      break;
    case Json::value_t::number_integer:
      out += std::to_string(v.get<std::int64_t>());
      break;
    case Json::value_t::number_unsigned:
      out += std::to_string(v.get<std::uint64_t>());
      break;
    case Json::value_t::number_float:
      out += fmt_double(v.get<double>());
      break;
    case Json::value_t::string:
      out += escape(v.get<std::string>());
      break;
    case Json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        break;
      }
      out += "[\n";
      for (std::size_t i = 0; i < v.size(); ++i) {
        out += pad1;
        write_json(v[i], indent + 1, out);
        if (i + 1 < v.size()) out += ",";
        out += "\n";
      }
      out += pad + "]";
      break;
    }
    case Json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        break;
      }
      out += "{\n";
      std::size_t i = 0;
      for (auto it = v.begin(); it != v.end(); ++it, ++i) {
        out += pad1 + escape(it.key()) + ": ";
        write_json(it.value(), indent + 1, out);
        if (i + 1 < v.size()) out += ",";
        out += "\n";
      }
      out += pad + "}";
      break;
    }
    default:
      out += "null";
      break;
  }
}

std::string scalar_text(const Json& v) {
  if (v.is_number_float()) return fmt_double(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void write_text(const Json& v, int indent, const std::string& label, std::string& out) {
  const std::string pad(2 * indent, ' ');
  if (v.is_object()) {
    if (!label.empty()) out += pad + label + ":\n";
    for (auto it = v.begin(); it != v.end(); ++it)
      write_text(it.value(), indent + (label.empty() ? 0 : 1), it.key(), out);
  } else if (v.is_array()) {
    if (!label.empty()) out += pad + label + ":\n";
    for (std::size_t i = 0; i < v.size(); ++i)
      write_text(v[i], indent + (label.empty() ? 0 : 1), "[" + std::to_string(i) + "]", out);
  } else {
    out += pad + label + ": " + scalar_text(v) + "\n";
  }
}

void write_csv(const Json& v, const std::string& path, std::string& out) {
  if (v.is_object()) {
    for (auto it = v.begin(); it != v.end(); ++it)
      write_csv(it.value(), path.empty() ? it.key() : path + "." + it.key(), out);
  } else if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i)
      write_csv(v[i], path + "[" + std::to_string(i) + "]", out);
  } else {
    out += path + "," + scalar_text(v) + "\n";
  }
}

}  // namespace

std::string json_to_bytes(const Json& value) {
  std::string out;
  write_json(value, 0, out);
  out += "\n";
  return out;
}

std::string emit_report(const Json& results, ReportFormat format) {
  switch (format) {
    case ReportFormat::json:
      return json_to_bytes(results);
    case ReportFormat::text: {
      std::string out;
      write_text(results, 0, "", out);
      if (out.empty()) out = "(empty report)\n";
      return out;
    }
    case ReportFormat::csv: {
      std::string out = "path,value\n";
      write_csv(results, "", out);
      return out;
    }
  }
  return {};
}

}  // namespace mfg
