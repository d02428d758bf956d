#include <stdio.h>
#include "prunesim.h"

int main(void) {
    uint32_t edges[] = {0, 1, 1, 2};
    PsGraph *g = NULL;
    if (ps_graph_from_edges(3, edges, 2, &g) != PS_STATUS_OK) {
        fprintf(stderr, "%s\n", ps_last_error_message());
        return 1;
    }
    PsSimConfig cfg = ps_sim_config_default();
    cfg.variant = PS_VARIANT_ENHANCED;
    PsRunMetrics *r = NULL;
    if (ps_simulate(g, &cfg, &r) != PS_STATUS_OK) {
        fprintf(stderr, "%s\n", ps_last_error_message());
        return 1;
    }
    PsRunSummary s;
    ps_metrics_summary(r, &s);
    printf("leader=%u nodes=%llu\n", s.leader, (unsigned long long)s.node_count);
    uint32_t d = 0;
    PsStatus bad = ps_hop_distance(g, 0, 9, &d);
    printf("bad_status=%d\n", (int)bad);
    ps_metrics_free(r);
    ps_graph_free(g);
    return 0;
}
