/* C interface to the air-defense training library. All functions return an adf_status;
 * on failure adf_last_error() describes the problem for the calling thread. Strings
 * returned through char** out-parameters are owned by the caller (adf_string_free). */
#ifndef ADF_ADF_H
#define ADF_ADF_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define ADF_API __declspec(dllexport)
#else
#define ADF_API __attribute__((visibility("default")))
#endif

typedef int adf_status;

enum {
  ADF_OK = 0,
  ADF_ERR_INVALID_CONFIG = 1,
  ADF_ERR_INVALID_ACTION = 2,
  ADF_ERR_UNKNOWN_DRONE = 3,
  ADF_ERR_OUT_OF_RANGE = 4,
  ADF_ERR_INVALID_PHASE = 5,
  ADF_ERR_IO = 6,
  ADF_ERR_PARSE = 7,
  ADF_ERR_EMPTY_INPUT = 8,
  ADF_ERR_NULL_ARGUMENT = 10,
  ADF_ERR_INTERNAL = 99
};

enum { ADF_TWO_SIDED = 0, ADF_LESS = 1, ADF_GREATER = 2 };

typedef struct adf_config adf_config;         /* world + training settings */
typedef struct adf_checkpoint adf_checkpoint; /* network, target, optimizer state */
typedef struct adf_demos adf_demos;           /* demonstration store */
typedef struct adf_server adf_server;

typedef struct {
  int wins;
  int losses;
  int timeouts;
  double mean_ticks;
  double success_rate;
} adf_eval_result;

typedef struct {
  double u;
  double p_two_sided;
  double p_value;
  double effect;
  int exact; /* 1 when the exact null distribution was used */
} adf_mwu_result;

typedef struct {
  double entropy;
  uint64_t unique_cells;
  double cell_size;
  uint64_t n_points;
} adf_diversity;

typedef void (*adf_progress_fn)(int episode, double success_rate, double epsilon, double wall_seconds,
                                void* user);

ADF_API const char* adf_version(void);
ADF_API const char* adf_last_error(void);
ADF_API const char* adf_status_name(adf_status status);
ADF_API void adf_string_free(char* s);

/* Config. `mini` selects the scaled-down world and training schedule. Keys cover both
 * world and training settings; "gamma" and "discount" are kept equal. */
ADF_API adf_status adf_config_new(int mini, adf_config** out);
ADF_API void adf_config_free(adf_config* cfg);
ADF_API adf_status adf_config_set(adf_config* cfg, const char* key, const char* value);
ADF_API adf_status adf_config_load_file(adf_config* cfg, const char* path);
ADF_API adf_status adf_config_dump(const adf_config* cfg, char** out_text);

/* Checkpoints. */
ADF_API adf_status adf_checkpoint_fresh(const adf_config* cfg, uint64_t seed, adf_checkpoint** out);
ADF_API adf_status adf_checkpoint_load(const char* path, adf_checkpoint** out);
ADF_API adf_status adf_checkpoint_save(const adf_checkpoint* ck, const char* path);
ADF_API void adf_checkpoint_free(adf_checkpoint* ck);

/* Training. `demos` may be NULL. demo_source is "agent", "human", "pc" or "mixed"
 * (all sources, sampled in equal proportion). Writes the final checkpoint and the
 * learning curve as CSV text. */
ADF_API adf_status adf_train(const adf_config* cfg, const char* scenario, const adf_demos* demos,
                             const char* demo_source, adf_progress_fn progress, void* user,
                             adf_checkpoint** out_checkpoint, char** out_curve_csv);

/* Evaluation. policy is "greedy" (needs a checkpoint), "heuristic" or "random". */
ADF_API adf_status adf_evaluate(const adf_config* cfg, const adf_checkpoint* ck, const char* policy,
                                const char* scenario, int episodes, uint64_t seed, adf_eval_result* out);

/* Demonstrations. source is "agent", "human" or "pc"; NULL counts every source. */
ADF_API adf_status adf_demos_new(adf_demos** out);
ADF_API adf_status adf_demos_read(const char* path, adf_demos** out);
ADF_API adf_status adf_demos_write(const adf_demos* demos, const char* path);
ADF_API adf_status adf_demos_append(adf_demos* into, const adf_demos* from);
ADF_API void adf_demos_free(adf_demos* demos);
ADF_API adf_status adf_demos_count(const adf_demos* demos, const char* source, int wins_only, size_t* out);
ADF_API adf_status adf_demos_collect(const adf_config* cfg, const adf_checkpoint* ck, const char* policy,
                                     const char* scenario, int count, int only_wins, uint64_t seed,
                                     const char* source, adf_demos** out);

/* Re-simulates stored episode `index` from its seed and action log. */
ADF_API adf_status adf_demo_replay(const adf_demos* demos, size_t index, double* out_max_divergence,
                                   double* out_reward_divergence);
/* episode,tick,drone,x,y,heading,controller rows for one episode (red as drone "red"). */
ADF_API adf_status adf_demo_trajectory_csv(const adf_demos* demos, size_t index, char** out_csv);

/* Analysis. */
ADF_API adf_status adf_mwu(const double* a, size_t na, const double* b, size_t nb, int alternative,
                           adf_mwu_result* out);
ADF_API adf_status adf_compare_curves(const char* const* curves_a, size_t na, const char* const* curves_b,
                                      size_t nb, int alternative, adf_mwu_result* out);
ADF_API adf_status adf_curve_stats(const char* curve_csv, double threshold, int final_blocks,
                                   int* out_episodes_to_reach, double* out_final_success);
ADF_API adf_status adf_demos_diversity(const adf_demos* demos, double cell_size, adf_diversity* out);
ADF_API adf_status adf_demos_heatmap_csv(const adf_demos* demos, const adf_config* cfg, double cell_size,
                                         char** out_csv);

/* Trial server. port 0 picks a free port; web_root and record_path may be NULL. */
ADF_API adf_status adf_server_start(const adf_config* cfg, unsigned short port, const char* web_root,
                                    const char* record_path, double pace_scale, adf_server** out);
ADF_API unsigned short adf_server_port(const adf_server* server);
ADF_API void adf_server_stop(adf_server* server);

#ifdef __cplusplus
}
#endif

#endif
