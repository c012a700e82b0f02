#include "cli_io.hpp"

int main(int argc, char** argv) { return infoacq::cli::run(argc, argv); }
