#include "tabdistill/cli.hpp"

int main(int argc, char** argv) { return tabdistill::cli::run(argc, argv); }
