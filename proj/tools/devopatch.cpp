#include "devopatch/cli.hpp"

int main(int argc, char** argv) { return devopatch::cli::run(argc, argv); }
