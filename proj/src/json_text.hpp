#pragma once

#include <cstdio>
#include <string>
#include <string_view>

namespace partstore::jsontext {

// Appends v as a JSON string literal, escaping exactly the way the
// canonical record form does: named escapes for the usual control
// characters, \u00xx for the rest, everything else verbatim.
inline void append_string(std::string& out, std::string_view v) {
    out.push_back('"');
    size_t flushed = 0;
    for (size_t i = 0; i < v.size(); ++i) {
        unsigned char c = static_cast<unsigned char>(v[i]);
        if (c >= 0x20 && c != '"' && c != '\\') continue;
        out.append(v, flushed, i - flushed);
        flushed = i + 1;
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default: {
                char buf[8];
                std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                out += buf;
            }
        }
    }
    out.append(v, flushed, v.size() - flushed);
    out.push_back('"');
}

} // namespace partstore::jsontext
