#include <math.h>
#include <stdio.h>
#include <string.h>

#include "pu_rank.h"

int main(void) {
    double w = 0.0;
    if (pu_rank_weight(3, &w) != PU_STATUS_OK || fabs(w - 11.0 / 6.0) > 1e-15) return 1;
    if (pu_rank_weight(0, &w) != PU_STATUS_INVALID_DATA) return 2;
    if (pu_last_error_message() == NULL) return 3;
    if (pu_ramp_loss(-5.0, -0.8) != 1.8) return 4;

    PuEmbeddings *table = NULL;
    if (pu_embeddings_load("/nonexistent/table.txt", &table) != PU_STATUS_IO || table != NULL) return 5;
    if (strstr(pu_last_error_message(), "/nonexistent/table.txt") == NULL) return 6;

    printf("pu-rank %s\n", pu_version());
    return 0;
}
