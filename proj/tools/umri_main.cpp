#include "umri/cli.hpp"

int main(int argc, char** argv) { return umri::cli::run(argc, argv); }
