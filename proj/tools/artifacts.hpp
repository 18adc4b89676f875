#ifndef TIMBRE_TOOLS_ARTIFACTS_HPP
#define TIMBRE_TOOLS_ARTIFACTS_HPP

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace timbre::cli {

/// Outputs of one run. Each artifact is written to a hidden temporary next to
/// its final name; commit() renames them all, and anything not committed is
/// removed on destruction, so a failed run leaves no partial files behind.
class RunDirectory {
public:
    explicit RunDirectory(std::filesystem::path dir);
    RunDirectory(const RunDirectory&) = delete;
    RunDirectory& operator=(const RunDirectory&) = delete;
    ~RunDirectory();

    /// Temporary path to write `name` to.
    std::filesystem::path stage(const std::string& name);
    void write_text(const std::string& name, const std::string& text);
    /// Adds run.json and renames every staged file into place.
    void commit(const nlohmann::json& metadata);

    [[nodiscard]] const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged_; // temp, final
    bool committed_ = false;
};

/// Tool and compiler versions for the run metadata. No timestamps: identical
/// inputs must give identical outputs.
nlohmann::json build_info();

} // namespace timbre::cli

#endif
