#include "blockloc/cli.hpp"

int main(int argc, char** argv) { return blockloc::cli::run(argc, argv); }
