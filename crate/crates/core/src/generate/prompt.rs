use super::llm::ChatMessage;
use super::{GenerationContext, Phase};
use crate::arch::Mode;

/// Appended after a failed attempt; `{error}` is replaced by the failure text.
pub const CORRECTION_SUFFIX: &str = "Your previous output failed: {error}. Emit only a corrected architecture.";

const GRAMMAR: &str = "\
Architectures are written in a block template language, one block call per line:
  Name(in_channels,out_channels,stride,repeats)
- in_channels of every block must equal out_channels of the block before it;
  the first block takes the 3-channel input image.
- stride is 1 or 2; repeats stacks that many units (stride applies to the first).
- Lines starting with # are comments.";

const DETECTION_GRAMMAR: &str = "\
- Append @P<k> to a block to expose its output as detection feature scale k
  (at least one tap, labels unique). Taps usually mark the last block of each resolution.";

const CLASSIFICATION_GRAMMAR: &str = "\
- The network must end with the head GAP(c,c,1,1) followed by FC(c,num_classes,1,1).";

fn few_shot(mode: Mode) -> [&'static str; 2] {
    match mode {
        Mode::Classification => [
            "ConvK3BNRELU(3,16,1,1)\nResK3K3(16,32,2,1)\nResK3K3(32,64,2,2)\nGAP(64,64,1,1)\nFC(64,10,1,1)",
            "ConvK3BNRELU(3,8,1,1)\nResK1K3K1(8,24,2,1)\nConvK5BNRELU(24,48,2,1)\nResK5K5(48,48,1,1)\nGAP(48,48,1,1)\nFC(48,10,1,1)",
        ],
        Mode::Detection => [
            "ConvK3BNRELU(3,16,2,1)\nResK3K3(16,32,2,1)@P3\nSCDown(32,64,2,1)\nPSA(64,64,1,1)@P4",
            "ConvK3BNRELU(3,16,2,1)\nSCDown(16,32,2,1)\nResK1K3K1(32,32,1,2)@P3\nSCDown(32,64,2,1)@P4\nResK3K3(64,96,2,1)@P5",
        ],
    }
}

fn system_message(ctx: &GenerationContext) -> String {
    let mode_rules = match ctx.mode {
        Mode::Classification => CLASSIFICATION_GRAMMAR,
        Mode::Detection => DETECTION_GRAMMAR,
    };
    format!(
        "You design convolutional neural network architectures for {} under strict resource budgets.\n\n\
         {GRAMMAR}\n{mode_rules}\n\nAvailable blocks:\n{}",
        ctx.mode,
        ctx.catalog.trim_end()
    )
}

fn constraints_section(ctx: &GenerationContext) -> String {
    let c = &ctx.constraints;
    let mut out = format!(
        "Constraints:\n- parameters <= {}\n- FLOPs <= {}\n- blocks (repeats expanded) <= {}\n",
        c.max_params, c.max_flops, c.max_depth
    );
    if let Some(min) = c.min_params {
        out.push_str(&format!("- parameters >= {min}\n"));
    }
    out
}

fn pool_section(ctx: &GenerationContext) -> String {
    if ctx.pool.is_empty() {
        return "Current candidate pool: empty.\n".to_string();
    }
    let mut out = String::from("Current candidate pool (best first):\n");
    for member in &ctx.pool {
        out.push_str(&format!("- score {:.4}: {}\n", member.score, member.serialization.trim_end().replace('\n', "; ")));
    }
    out
}

/// Chat messages for one generation request: a system message and a user message.
pub fn build_prompt(ctx: &GenerationContext) -> Vec<ChatMessage> {
    let [ex1, ex2] = few_shot(ctx.mode);
    let mut user = String::new();
    user.push_str(&constraints_section(ctx));
    user.push_str(&format!("\nExample architectures:\n```\n{ex1}\n```\n```\n{ex2}\n```\n\n"));
    user.push_str(&pool_section(ctx));

    match (ctx.phase, &ctx.base) {
        (Phase::Refinement, Some(base)) => {
            let p = &base.profile;
            user.push_str(&format!(
                "\nBase architecture (score {:.4}, {} parameters, {} FLOPs at {}x{}, depth {}):\n```\n{}\n```\n",
                base.score,
                p.params,
                p.flops,
                p.resolution,
                p.resolution,
                p.depth,
                base.serialization.trim_end()
            ));
            if ctx.feedback.is_empty() {
                user.push_str("\nFeedback: no rejected candidates yet.\n");
            } else {
                user.push_str("\nFeedback on recent rejected candidates:\n");
                for line in &ctx.feedback {
                    user.push_str(&format!("- {line}\n"));
                }
            }
            user.push_str(
                "\nImprove the base architecture while preserving overall structure: \
                 modify underperforming components so that the score increases and all constraints hold. \
                 Emit exactly one architecture inside a single fenced code block.",
            );
        }
        _ => {
            if !ctx.feedback.is_empty() {
                user.push_str("\nRecent rejections:\n");
                for line in &ctx.feedback {
                    user.push_str(&format!("- {line}\n"));
                }
            }
            user.push_str(
                "\nPropose one new, diverse architecture that satisfies every constraint. \
                 Emit exactly one architecture inside a single fenced code block.",
            );
        }
    }

    vec![ChatMessage::system(system_message(ctx)), ChatMessage::user(user)]
}
