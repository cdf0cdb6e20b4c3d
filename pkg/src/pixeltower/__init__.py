"""pixeltower: pixel-only contrastive image/text learning.

One shared vision transformer encodes photographs and text rendered as
images; training is a symmetric contrastive loss over batches of pairs,
optionally mixed with rendered sentence pairs. The package also carries
the evaluation protocols (zero-shot, retrieval, probes, VQA transfer,
sentence tasks, typographic attacks), a byte-level BPE baseline for
sequence-length comparisons, and representation analyses.
"""

from .analysis import (
    gap_report,
    linear_cka,
    modality_gap,
    pairwise_distance_hist,
    patch_kernel_pca,
    pca_project,
)
from .autodiff import Tape, Tensor, backward, check_gradients, grad_of
from .bpe import Vocab, bpe_decode, bpe_encode, bpe_train, efficiency_report, visual_sequence_length
from .container import load_container, save_container
from .encoder import (
    EmbeddingBatch,
    EncoderConfig,
    EncoderParams,
    encode,
    expected_param_count,
    init_params,
    layer_activations,
    patchify,
)
from .evaluate import (
    EncoderBundle,
    MetricsRecord,
    TransferHeadConfig,
    VqaFinetuneConfig,
    few_shot_linear_probe,
    mlp_transfer,
    retrieval_recall,
    typographic_attack_eval,
    vqa_finetune,
    zero_shot_classify,
)
from .glyphs import Glyph, GlyphTable, builtin_font_path, load_builtin_table, load_glyph_table, parse_hex_line
from .render import (
    LayoutPlan,
    RenderConfig,
    RenderedImage,
    compose_question_image,
    layout_text,
    overlay_text,
    render_sentence_pair,
    render_text,
    used_patch_count,
)
from .synthetic import (
    augmented_shape_batches,
    augmented_shape_pairs,
    make_shapes_dataset,
    make_vqa_dataset,
)
from .training import (
    ContrastiveOutput,
    PairBatch,
    TrainConfig,
    contrastive_loss,
    lr_at,
    mixed_batches,
    nsp_pairs,
    parallel_pairs,
    scaled_step_count,
    train,
)

__version__ = "0.1.0"
