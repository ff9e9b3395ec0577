#pragma once

#include <filesystem>
#include <memory>
#include <string>

namespace dpvis {

struct ServiceOptions {
    // Holds dataset.json, models/, subgroups.json and the workspace file.
    std::filesystem::path data_dir = "dpvis-data";
    // Active model and id counters; defaults to data_dir/workspace.json.
    std::filesystem::path workspace_file;
};

// The HTTP JSON API over one workspace: a dataset, its trained models, the
// active model's decoding and the subgroup store. Readers work on an
// immutable snapshot; mutations are serialized through a single writer.
class Service {
public:
    explicit Service(ServiceOptions options);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Blocks until stop().
    bool listen(const std::string& host, int port);
    // Binds an ephemeral port and serves on a background thread.
    int start_background(const std::string& host = "127.0.0.1");
    void stop();

    // Waits for running training jobs to finish.
    void wait_for_jobs();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace dpvis
