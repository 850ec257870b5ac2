#pragma once

// HTTP binding for Service. Every route is forwarded verbatim; the one
// addition is `GET /sessions/{id}/frames?follow=1`, which keeps the response
// open and pushes frames as chunked NDJSON until the completion event.

#include <atomic>
#include <memory>
#include <regex>
#include <string>
#include <thread>

#include <httplib.h>
// <resolv.h> (pulled in by httplib) defines _res, which breaks Eigen headers included later.
#undef _res

#include "vibraforge/service.hpp"

namespace vibraforge {

class HttpServer {
public:
    explicit HttpServer(std::shared_ptr<Service> service) : service_(std::move(service)) {
        auto forward = [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); };
        const char* any = R"(/.*)";
        server_.Get(any, forward);
        server_.Post(any, forward);
        server_.Put(any, forward);
        server_.Delete(any, forward);
        server_.Patch(any, forward);
    }

    ~HttpServer() { stop(); }

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Bind to `port` (0 picks a free one). Returns the bound port or -1.
    int bind(const std::string& host, int port) {
        if (port == 0) return bind_any(host);
        return server_.bind_to_port(host, port) ? port : -1;
    }
    int bind_any(const std::string& host) { return server_.bind_to_any_port(host); }

    /// Serve on a background thread.
    void start() {
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    /// Serve on the calling thread until stop().
    bool run() { return server_.listen_after_bind(); }

    void stop() {
        stopping_ = true;
        if (server_.is_running()) server_.stop();
        if (thread_.joinable()) thread_.join();
    }

private:
    static Request to_request(const httplib::Request& req) {
        Request r{req.method, req.path, req.body, {}};
        for (const auto& [k, v] : req.params) r.query[k] = v;
        return r;
    }

    void handle(const httplib::Request& req, httplib::Response& res) {
        static const std::regex frames_re(R"(^/sessions/[A-Za-z0-9_-]+/frames$)");
        if (req.method == "GET" && req.get_param_value("follow") == "1" && std::regex_match(req.path, frames_re)) {
            follow(to_request(req), res);
            return;
        }
        const auto out = service_->handle(to_request(req));
        res.status = out.status;
        res.set_content(out.body, out.content_type);
    }

    void follow(Request req, httplib::Response& res) {
        req.query.erase("follow");
        const auto first = service_->handle(req);
        if (first.status != 200) {
            res.status = first.status;
            res.set_content(first.body, first.content_type);
            return;
        }
        auto svc = service_;
        auto sent = std::make_shared<std::size_t>(0);
        if (req.query.contains("since")) *sent = std::stoul(req.query.at("since"));
        res.set_chunked_content_provider("application/x-ndjson", [this, svc, req, sent](std::size_t, httplib::DataSink& sink) mutable {
            req.query["since"] = std::to_string(*sent);
            const auto r = svc->handle(req);
            if (r.status != 200) return false;
            bool complete = false;
            std::size_t pos = 0;
            while (pos < r.body.size()) {
                const auto nl = r.body.find('\n', pos);
                const auto line = r.body.substr(pos, nl - pos + 1);
                pos = nl + 1;
                if (line.find("\"event\"") != std::string::npos) {
                    complete = true;
                } else {
                    ++*sent;
                }
                if (!sink.write(line.data(), line.size())) return false;
            }
            if (complete || stopping_) {
                sink.done();
                return true;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(33));
            return true;
        });
    }

    std::shared_ptr<Service> service_;
    httplib::Server server_;
    std::thread thread_;
    std::atomic<bool> stopping_ = false;
};

}  // namespace vibraforge
