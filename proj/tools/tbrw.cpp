#include "cli.hpp"

int main(int argc, char** argv) { return tbrw::cli::main(argc, argv); }
