/* TauFlow C ABI: complexity-adaptive segmentation behind opaque handles.
 *
 * Every function returns a status code; TAUFLOW_OK is zero. On failure the
 * thread-local message from tauflow_last_error() describes what went wrong.
 * Strings returned through char** out-parameters are heap-allocated and must
 * be released with tauflow_string_free().
 */
#ifndef TAUFLOW_H
#define TAUFLOW_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tauflow_status {
  TAUFLOW_OK = 0,
  TAUFLOW_INVALID_ARGUMENT = 1,
  TAUFLOW_SHAPE = 2,
  TAUFLOW_NUMERIC = 3,
  TAUFLOW_IO = 4,
  TAUFLOW_FORMAT = 5,
  TAUFLOW_CONFIG = 6,
  TAUFLOW_INTERNAL = 7
} tauflow_status;

typedef struct tauflow_model tauflow_model;
typedef struct tauflow_dataset tauflow_dataset;

/* Library semantic version, static storage. */
const char* tauflow_version(void);

/* Message from the most recent failing call on this thread; empty string
 * when the last call succeeded. Storage is owned by the library. */
const char* tauflow_last_error(void);

void tauflow_string_free(char* s);

/* ---- model lifecycle ---------------------------------------------------- */

/* Builds a freshly initialized model. config_json may be NULL or "{}" for
 * the defaults; unknown keys are rejected. */
tauflow_status tauflow_model_create(const char* config_json, uint64_t seed,
                                    tauflow_model** out);

/* Restores a model (config and parameters) from a checkpoint file. */
tauflow_status tauflow_model_open(const char* ckpt_path, tauflow_model** out);

tauflow_status tauflow_model_save(tauflow_model* m, const char* ckpt_path);

/* The model's configuration as a JSON document. */
tauflow_status tauflow_model_config(tauflow_model* m, char** json_out);

void tauflow_model_free(tauflow_model* m);

/* ---- datasets ----------------------------------------------------------- */

/* n synthetic image/mask pairs at height x width, fully determined by seed. */
tauflow_status tauflow_dataset_synth(int n, uint64_t seed, int height, int width,
                                     tauflow_dataset** out);

/* Loads every <stem>.ppm / <stem>.pgm pair in a directory (sorted by stem),
 * resized to target_size x target_size. */
tauflow_status tauflow_dataset_open_dir(const char* dir, int target_size,
                                        tauflow_dataset** out);

/* Writes the dataset as <id>.ppm / <id>.pgm files. */
tauflow_status tauflow_dataset_write_dir(const tauflow_dataset* d, const char* dir);

/* Sample count, or -1 for a NULL handle. */
int tauflow_dataset_size(const tauflow_dataset* d);

void tauflow_dataset_free(tauflow_dataset* d);

/* ---- work --------------------------------------------------------------- */

/* Trains in place per the model's embedded train config. The best-validation
 * parameters go to ckpt_out (NULL or "" skips saving). echo_log nonzero
 * streams per-epoch log lines to stdout. summary_json_out (optional) gets
 * {best_val_dice, best_epoch, epochs_run, final_train_dice, final_main_loss,
 *  first_step_losses, log}. */
tauflow_status tauflow_train(tauflow_model* m, const tauflow_dataset* d,
                             const char* ckpt_out, int echo_log, char** summary_json_out);

/* Scores the dataset. report_json_out gets
 * {dice, iou, hd95, per_sample: [{id, dice, iou, hd95, hd95_empty}, ...]}. */
tauflow_status tauflow_evaluate(tauflow_model* m, const tauflow_dataset* d,
                                char** report_json_out);

/* Segments one P6 image, writing the binarized mask as a P5 file (0/255).
 * report_json_out (optional) gets {groups, score, attention: [...]}. */
tauflow_status tauflow_infer_file(tauflow_model* m, const char* image_path,
                                  const char* mask_out_path, char** report_json_out);

/* Analytic parameter/FLOPs table for a configuration. groups > 0 restricts
 * the FLOPs listing to that group count; 0 lists G = 1..max_groups. */
tauflow_status tauflow_cost_table(const char* config_json, int groups, char** table_out);

/* Runs the finite-difference oracle suite. module NULL or "" runs every
 * module. Each report line is "<module> max_rel_err=<value>". max_err_out
 * (optional) receives the worst error across the modules run. */
tauflow_status tauflow_gradcheck(const char* module, double eps, char** report_out,
                                 double* max_err_out);

#ifdef __cplusplus
}
#endif

#endif /* TAUFLOW_H */
