use crate::error::{Error, Result};

use super::validate::leaks_object_name;

const ROLE: &str = "You are an analytical assistant specializing in robotic affordance grounding. \
Your expertise is in creating tasks that facilitate the training of robotic policies, enabling \
robots to reason about task execution, such as determining the appropriate part of an object to grasp.";

const TASK_DESCRIPTION: &str = "You will be provided with the name of a tool that can be attached \
to a robotic arm. The robot is expected to use this tool to perform a variety of everyday tasks. \
Along with the tool name, you will receive a list of tasks that have already been generated for this tool.";

const GUIDELINES: [(&str, &str); 3] = [
    (
        "Diversity",
        "Aim for a wide range of tasks, ensuring that there is no overlap with previous ones.",
    ),
    (
        "Daily Tasks",
        "Tasks should be common and representative of the ones encountered in daily life.",
    ),
    (
        "Leakage Avoidance",
        "Ensure that the generated tasks do not explicitly mention the name of the tool object.",
    ),
];

const INSTRUCTION: &str = "With the provided OBJECT_NAME, generate five new affordance grounding \
tasks. Use the HISTORY of generated tasks as a reference to ensure compliance with the diversity \
guideline. Output should be in the JSON format with the object name as the key.";

/// Hand-written demonstrations; not taken from any published prompt. Two
/// are shown, skipping any whose tool shares a word with the requested one.
const EXAMPLES: [(&str, [&str; 2]); 3] = [
    ("ladle", ["serve soup into bowls", "skim foam off a simmering stock"]),
    (
        "scissors",
        ["trim the stems of fresh flowers", "open a sealed snack bag"],
    ),
    ("tongs", ["turn sausages on a grill", "lift ice cubes into a glass"]),
];

/// Builds the generation prompt for one object. `history` holds the
/// descriptions already produced for it and is rendered as a JSON array.
pub fn build_grounding_prompt(object: &str, history: &[String]) -> Result<String> {
    let object = object.trim();
    if object.is_empty() {
        return Err(Error::InvalidInput("object name is empty".into()));
    }
    let mut out = String::new();
    out.push_str("Role:\n");
    out.push_str(ROLE);
    out.push_str("\n\nTask Description:\n");
    out.push_str(TASK_DESCRIPTION);
    out.push_str("\n\nGuidelines:\n");
    for (name, text) in GUIDELINES {
        out.push_str(&format!("- {name}: {text}\n"));
    }
    out.push_str("\nExamples:\n");
    for (tool, tasks) in EXAMPLES
        .iter()
        .filter(|(tool, _)| !leaks_object_name(tool, object) && !leaks_object_name(object, tool))
        .take(2)
    {
        let obj = serde_json::json!({ *tool: tasks });
        out.push_str(&obj.to_string());
        out.push('\n');
    }
    out.push_str("\nInstruction:\n");
    out.push_str(INSTRUCTION);
    out.push_str("\nOBJECT_NAME: ");
    out.push_str(object);
    out.push_str("\nHISTORY: ");
    out.push_str(&serde_json::to_string(history).expect("strings serialize"));
    out.push('\n');
    Ok(out)
}

/// Extracts the HISTORY array back out of a built prompt.
pub fn prompt_history(prompt: &str) -> Option<Vec<String>> {
    let line = prompt.lines().rev().find_map(|l| l.strip_prefix("HISTORY: "))?;
    serde_json::from_str(line).ok()
}
