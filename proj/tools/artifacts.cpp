#include "artifacts.hpp"

#include <fstream>
#include <stdexcept>
#include <system_error>

namespace timbre::cli {

RunDirectory::RunDirectory(std::filesystem::path dir) : dir_(std::move(dir))
{
    std::filesystem::create_directories(dir_);
}

RunDirectory::~RunDirectory()
{
    if (committed_) return;
    std::error_code ec;
    for (const auto& [tmp, final_path] : staged_) std::filesystem::remove_all(tmp, ec);
}

std::filesystem::path RunDirectory::stage(const std::string& name)
{
    const auto final_path = dir_ / name;
    auto tmp = final_path;
    tmp.replace_filename("." + final_path.filename().string() + ".tmp");
    std::filesystem::create_directories(final_path.parent_path());
    staged_.emplace_back(tmp, final_path);
    return tmp;
}

void RunDirectory::write_text(const std::string& name, const std::string& text)
{
    const auto path = stage(name);
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out.flush()) throw std::runtime_error("cannot write " + path.string());
}

void RunDirectory::commit(const nlohmann::json& metadata)
{
    write_text("run.json", metadata.dump(2) + "\n");
    for (const auto& [tmp, final_path] : staged_) {
        if (!std::filesystem::exists(tmp)) throw std::runtime_error("artifact " + final_path.string() + " was never written");
    }
    for (const auto& [tmp, final_path] : staged_) {
        // A rerun replaces a directory artifact wholesale; files are replaced by rename.
        if (std::filesystem::is_directory(final_path)) std::filesystem::remove_all(final_path);
        std::filesystem::rename(tmp, final_path);
    }
    committed_ = true;
}

nlohmann::json build_info()
{
    return {
        {"tool", "timbre"},
        {"version", "0.1.0"},
#if defined(__clang__)
        {"compiler", "clang " __clang_version__},
#elif defined(__GNUC__)
        {"compiler", "gcc " __VERSION__},
#endif
        {"cxx_standard", __cplusplus},
    };
}

} // namespace timbre::cli
