"""Zero-shot face-morphing-attack detection with a dual image-text encoder.

Images and class-describing prompt pairs are embedded into a shared
space; the softmax over temperature-scaled cosine similarities gives a
morph probability, evaluated with presentation-attack error metrics and
explained with perturbation-based saliency maps.
"""

from .baselines import (
    PrototypeScorer,
    baseline_score,
    fit_prototype,
    load_scorer,
    prototype_from_embeddings,
    save_scorer,
)
from .bundle import (
    ModelBundle,
    encode_image,
    encode_images,
    encode_text,
    encode_texts,
    load_bundle,
    make_toy_backbone,
    make_toy_bundle,
    normalize,
)
from .classifier import (
    BankRun,
    PromptBank,
    PromptCategory,
    PromptPair,
    ScoreRecord,
    classify,
    default_prompt_bank,
    load_prompt_bank,
    run_bank,
    save_prompt_bank,
    score,
    score_embeddings,
    softmax_pair,
)
from .errors import (
    BundleError,
    ConstraintError,
    DecodeError,
    DegenerateError,
    EmptyReferenceError,
    EngineError,
    InferenceError,
    ParseError,
    SchemaError,
    SingularFitError,
    VocabError,
)
from .experiments import (
    AggregateStat,
    ComparisonRow,
    ExperimentResult,
    compare_models,
    experiment1,
    experiment2,
    experiment3,
    five_number,
)
from .explain import (
    SaliencyMap,
    SegmentMask,
    explain,
    explain_with_scorer,
    save_overlay,
    save_saliency,
    segment,
)
from .imaging import PreprocessSpec, center_crop, decode, preprocess, resize
from .manifest import (
    FaceSample,
    Generator,
    Label,
    Manifest,
    Medium,
    load_manifest,
    slice_manifest,
    write_manifest,
)
from .metrics import (
    DetPoint,
    LabeledScores,
    OperatingPoint,
    bpcer_at_macer,
    candidate_thresholds,
    det_curve,
    eer,
    rates_at,
)
from .tokenizer import (
    TokenSequence,
    Vocabulary,
    build_toy_vocab,
    clean_text,
    detokenize,
    load_vocab,
    tokenize,
)

__version__ = "0.1.0"
