#pragma once
// Thin shared layer over cpp-httplib: base-URL splitting and a retrying
// request helper with exponential backoff.

#include <chrono>
#include <functional>
#include <string>
#include <thread>

#include <httplib.h>

#include "kgforge/error.hpp"

namespace kgforge {

struct BaseUrl {
    std::string host;  // scheme://host[:port], what httplib::Client wants
    std::string path;  // path prefix, "" or "/v1"
};

inline BaseUrl split_base_url(const std::string& url) {
    std::string rest = url;
    std::string scheme = "http://";
    if (rest.rfind("https://", 0) == 0) {
        scheme = "https://";
        rest = rest.substr(8);
    } else if (rest.rfind("http://", 0) == 0) {
        rest = rest.substr(7);
    }
    size_t slash = rest.find('/');
    BaseUrl out;
    if (slash == std::string::npos) {
        out.host = scheme + rest;
    } else {
        out.host = scheme + rest.substr(0, slash);
        out.path = rest.substr(slash);
        while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    }
    return out;
}

inline bool is_transient_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

// Runs `attempt` up to max_retries+1 times, sleeping base_backoff_ms * 2^n
// between tries. `attempt` returns the body on success, nullopt on a
// transient failure (recording why in `last_error`).
inline std::string with_retries(int max_retries, int base_backoff_ms,
                                const std::function<std::optional<std::string>(std::string&)>& attempt) {
    std::string last_error = "no attempt made";
    for (int try_no = 0; try_no <= max_retries; ++try_no) {
        if (try_no > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(base_backoff_ms << (try_no - 1)));
        }
        if (auto body = attempt(last_error)) return *body;
    }
    throw Error(ErrorKind::backend,
                "retries exhausted (" + std::to_string(max_retries + 1) + " attempts): " + last_error);
}

}  // namespace kgforge
